"""Adam optimization, plateau learning-rate scheduling, teacher and student training.

Teachers are classifiers fit with softmax cross-entropy on labeled data.
Students imitate a teacher's logits under mean squared error; an ensemble of
independently seeded, over-wide students is the raw material the
reconstruction stage clusters.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentedSet
from .data import ImageDataset, QuerySet
from .errors import DivergenceError
from .network import (
    Gradients,
    Mlp,
    backprop_from_dout,
    backward_mse,
    forward,
    init_mlp,
    mse_loss,
)

HistoryPoint = tuple[int, float, float]  # (step, full-set train loss, lr)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings for one training run.

    `eval_every` of None means one epoch-equivalent of steps. `target_loss`
    stops training early once the full-set loss reaches it; the default is low
    enough to be off in practice.
    """

    learning_rate: float
    batch_size: int
    max_steps: int
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    plateau_min_lr: float = 1e-7
    plateau_threshold: float = 0.0  # relative improvement needed to reset patience
    eval_every: int | None = None
    target_loss: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")


@dataclass(eq=False)
class AdamState:
    """First/second moment accumulators, one pair per parameter block."""

    m: Gradients
    v: Gradients
    t: int = 0

    @classmethod
    def zeros_like(cls, net: Mlp) -> "AdamState":
        zero = lambda a: np.zeros_like(a)
        return cls(
            m=Gradients(zero(net.W), zero(net.b), zero(net.A), zero(net.c_out)),
            v=Gradients(zero(net.W), zero(net.b), zero(net.A), zero(net.c_out)),
        )


def adam_step(net: Mlp, grads: Gradients, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[Mlp, AdamState]:
    """One Adam update with bias correction; returns the new net and state."""
    t = state.t + 1
    corr1 = 1.0 - beta1**t
    corr2 = 1.0 - beta2**t

    def upd(p, g, m, v):
        m_new = beta1 * m + (1.0 - beta1) * g
        v_new = beta2 * v + (1.0 - beta2) * (g * g)
        step_dir = (m_new / corr1) / (np.sqrt(v_new / corr2) + eps)
        return p - lr * step_dir, m_new, v_new

    W, mW, vW = upd(net.W, grads.W, state.m.W, state.v.W)
    b, mb, vb = upd(net.b, grads.b, state.m.b, state.v.b)
    A, mA, vA = upd(net.A, grads.A, state.m.A, state.v.A)
    c_out, mc, vc = upd(net.c_out, grads.c_out, state.m.c_out, state.v.c_out)
    new_state = AdamState(m=Gradients(mW, mb, mA, mc), v=Gradients(vW, vb, vA, vc), t=t)
    return Mlp(W=W, b=b, A=A, c_out=c_out), new_state


class PlateauScheduler:
    """Multiply lr by `factor` after `patience` consecutive non-improving evaluations.

    With `threshold` > 0 an evaluation only counts as improving when it beats
    the best seen so far by that relative margin; lucky sub-threshold wiggles
    then stop resetting the patience counter. The lr never increases and never
    drops below `min_lr`.
    """

    def __init__(self, lr: float, factor: float, patience: int, min_lr: float,
                 threshold: float = 0.0):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = np.inf
        self.bad_evals = 0

    def step(self, metric: float) -> float:
        if metric < self.best * (1.0 - self.threshold):
            self.best = metric
            self.bad_evals = 0
        else:
            self.bad_evals += 1
            if self.bad_evals >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_evals = 0
        return self.lr


def steps_for(epochs: int, dataset_size: int, batch_size: int) -> int:
    """Step budget equivalent to a number of epochs: floor(epochs * |X| / |batch|)."""
    if min(epochs, dataset_size, batch_size) < 1:
        raise ValueError("epochs, dataset_size and batch_size must all be >= 1")
    return (epochs * dataset_size) // batch_size


def _softmax_ce(net: Mlp, X: np.ndarray, labels: np.ndarray) -> tuple[Gradients, float]:
    """Mean cross-entropy of softmax(logits) against integer labels, with gradients."""
    trace = forward(net, X)
    B = X.shape[0]
    shifted = trace.out - trace.out.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    idx = np.arange(B)
    loss = float(np.mean(np.log(total) - shifted[idx, labels]))
    p = exp / total[:, None]
    p[idx, labels] -= 1.0
    return backprop_from_dout(net, trace, X, p / B), loss


def _ce_loss(net: Mlp, X: np.ndarray, labels: np.ndarray) -> float:
    out = forward(net, X).out
    shifted = out - out.max(axis=1, keepdims=True)
    total = np.exp(shifted).sum(axis=1)
    return float(np.mean(np.log(total) - shifted[np.arange(X.shape[0]), labels]))


def accuracy(net: Mlp, ds: ImageDataset) -> float:
    """Fraction of samples whose argmax logit equals the label."""
    pred = forward(net, ds.images).out.argmax(axis=1)
    return float(np.mean(pred == ds.labels))


def _fit(net: Mlp, X: np.ndarray, grad_fn, eval_fn,
         cfg: TrainConfig) -> tuple[Mlp, list[HistoryPoint]]:
    """Shared minibatch Adam loop with epoch-wise shuffling and plateau scheduling.

    `grad_fn(net, idx)` returns (Gradients, batch loss); `eval_fn(net)` the
    full-set loss used for the history, the scheduler and early stopping.
    The last short batch of each epoch is kept.
    """
    n = X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.zeros_like(net)
    sched = PlateauScheduler(cfg.learning_rate, cfg.plateau_factor,
                             cfg.plateau_patience, cfg.plateau_min_lr,
                             threshold=cfg.plateau_threshold)
    eval_every = cfg.eval_every or max(1, -(-n // cfg.batch_size))
    initial = eval_fn(net)
    history: list[HistoryPoint] = [(0, initial, sched.lr)]
    if initial <= cfg.target_loss:
        return net, history
    sched.step(initial)
    order = rng.permutation(n)
    pos = 0
    step = 0
    while step < cfg.max_steps:
        if pos >= n:
            order = rng.permutation(n)
            pos = 0
        batch_idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        with np.errstate(over="ignore", invalid="ignore"):
            # a diverging run overflows before it is caught; keep that quiet
            grads, batch_loss = grad_fn(net, batch_idx)
        if not np.isfinite(batch_loss):
            raise DivergenceError(step)
        try:
            net, state = adam_step(net, grads, state, sched.lr,
                                   cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        except ValueError as exc:  # non-finite parameters with a still-finite loss
            raise DivergenceError(step, f"diverged at step {step}: {exc}") from exc
        step += 1
        if step % eval_every == 0 or step == cfg.max_steps:
            full = eval_fn(net)
            if not np.isfinite(full):
                raise DivergenceError(step)
            history.append((step, full, sched.lr))
            sched.step(full)
            if full <= cfg.target_loss:
                break
    return net, history


def train_teacher(ds: ImageDataset, r: int, cfg: TrainConfig) -> tuple[Mlp, list[HistoryPoint]]:
    """Fit a width-r classifier on a standardized labeled dataset.

    Deterministic under cfg.seed: the same config trains bit-identical
    teachers. Returns the net and the (step, loss, lr) history.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    n_classes = int(ds.labels.max()) + 1
    net = init_mlp(r, ds.d, n_classes, seed=cfg.seed)
    X, labels = ds.images, ds.labels
    return _fit(
        net, X,
        grad_fn=lambda m, idx: _softmax_ce(m, X[idx], labels[idx]),
        eval_fn=lambda m: _ce_loss(m, X, labels),
        cfg=cfg,
    )


def query_teacher(teacher: Mlp, aug: AugmentedSet) -> QuerySet:
    """Label query inputs with the teacher's raw (pre-softmax) logits."""
    targets = forward(teacher, aug.inputs).out
    return QuerySet(inputs=aug.inputs, targets=targets,
                    provenance=aug.spec.describe())


def train_student(qs: QuerySet, r_student: int,
                  cfg: TrainConfig) -> tuple[Mlp, list[HistoryPoint]]:
    """Fit one fresh width-r_student imitator to a query set under MSE."""
    net = init_mlp(r_student, qs.d, qs.c, seed=cfg.seed)
    return fit_mse(net, qs, cfg)


def fit_mse(net: Mlp, qs: QuerySet, cfg: TrainConfig) -> tuple[Mlp, list[HistoryPoint]]:
    """Minimize the imitation loss over a query set starting from `net`."""
    X, Y = qs.inputs, qs.targets
    return _fit(
        net, X,
        grad_fn=lambda m, idx: backward_mse(m, X[idx], Y[idx]),
        eval_fn=lambda m: mse_loss(m, X, Y),
        cfg=cfg,
    )


@dataclass(eq=False)
class StudentEnsemble:
    """N independently trained imitators of one teacher.

    `students[i]` is None when student i diverged; the failure is recorded in
    `failures` and the rest of the ensemble is unaffected.
    """

    students: list[Mlp | None]
    histories: list[list[HistoryPoint]]
    final_losses: list[float]
    rho: int
    teacher_r: int
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_students(self) -> int:
        return len(self.students)

    @property
    def trained(self) -> list[Mlp]:
        return [s for s in self.students if s is not None]


def _train_indexed(args) -> tuple[int, Mlp | None, list[HistoryPoint], str]:
    index, qs, r_student, cfg = args
    try:
        net, history = train_student(qs, r_student, replace(cfg, seed=cfg.seed + index))
        return index, net, history, ""
    except DivergenceError as exc:
        return index, None, [], str(exc)


def train_ensemble(qs: QuerySet, teacher_r: int, rho: int, N: int,
                   cfg: TrainConfig, jobs: int = 1) -> StudentEnsemble:
    """Train N students of width rho*teacher_r with seeds cfg.seed+0 .. +N-1.

    Students are independent, so `jobs` > 1 trains them in parallel processes;
    the result is ordered by seed index and bit-identical either way.
    """
    if N < 2:
        raise ValueError("an ensemble needs N >= 2 students")
    if rho < 1 or teacher_r < 1:
        raise ValueError("rho and teacher_r must be >= 1")
    r_student = rho * teacher_r
    payloads = [(i, qs, r_student, cfg) for i in range(N)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_indexed, payloads))
    else:
        results = [_train_indexed(p) for p in payloads]
    results.sort(key=lambda item: item[0])
    ensemble = StudentEnsemble(
        students=[net for _, net, _, _ in results],
        histories=[hist for _, _, hist, _ in results],
        final_losses=[
            hist[-1][1] if hist else float("nan") for _, _, hist, _ in results
        ],
        rho=rho,
        teacher_r=teacher_r,
    )
    ensemble.failures = [(i, msg) for i, net, _, msg in results if net is None]
    return ensemble

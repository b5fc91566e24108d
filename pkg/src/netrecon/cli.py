"""Command-line front end: run the recovery pipeline from a declarative config.

Stages write their artifacts into one output directory so later stages can
pick them up: teacher.mlp, queries.qs, students/student_NN.mlp, then
reconstructed.mlp and report.csv. Exit codes: 0 success, 2 config or input
error, 3 training divergence, 4 empty reconstruction.

The output directory comes from --out, else the NETRECON_OUT environment
variable, else the config's [run] output_dir.
"""

from __future__ import annotations

import argparse
import os
import sys
from statistics import median

import numpy as np

from ._io import atomic_write_text
from .augment import build
from .config import ExperimentConfig, load_config
from .data import ImageDataset, load_idx, load_queryset, save_queryset, standardize, subset
from .errors import ConfigError, DivergenceError, NetreconError
from .metrics import scatter_table, write_losses_csv
from .network import Mlp, load_mlp, save_mlp
from .reconstruct import (
    cluster_neurons,
    collapse,
    evaluate_reconstruction,
    extract_neurons,
    fine_tune,
)
from .train import _train_indexed, accuracy, query_teacher, train_teacher

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_EMPTY_RECONSTRUCTION = 4

REPORT_COLUMNS = "method,r,N,m/r,avg_dw,max_dw,avg_da,max_da,Q"


def _require_files(*paths: str) -> None:
    missing = [p for p in paths if not os.path.isfile(p)]
    if missing:
        raise ConfigError("missing input file(s): " + ", ".join(missing))


def _teacher_training_set(cfg: ExperimentConfig) -> tuple[ImageDataset, float, float]:
    """Load, optionally subset, and standardize the teacher's training split."""
    _require_files(cfg.teacher.train_images, cfg.teacher.train_labels)
    ds = load_idx(cfg.teacher.train_images, cfg.teacher.train_labels)
    if cfg.teacher.subset is not None:
        ds = subset(ds, cfg.teacher.subset, seed=cfg.seed)
    return standardize(ds)


def _history_csv(history, extra_header: str = "", extra: str = "") -> str:
    header = "step,loss,lr" + extra_header
    lines = [header]
    lines += [f"{step},{loss!r},{lr!r}{extra}" for step, loss, lr in history]
    return "\n".join(lines) + "\n"


def cmd_train_teacher(cfg: ExperimentConfig, out_dir: str) -> int:
    ds, mean, std = _teacher_training_set(cfg)
    teacher, history = train_teacher(ds, cfg.teacher.hidden, cfg.teacher.train)
    os.makedirs(out_dir, exist_ok=True)
    save_mlp(teacher, os.path.join(out_dir, "teacher.mlp"))
    atomic_write_text(os.path.join(out_dir, "teacher_history.csv"), _history_csv(history))
    acc = accuracy(teacher, ds)
    print(f"teacher: r={teacher.r} d={teacher.d} c={teacher.c} "
          f"samples={ds.n_samples} mean={mean:.6g} std={std:.6g}")
    print(f"teacher train accuracy: {acc:.4f}")
    print(f"teacher final loss: {history[-1][1]:.6e}" if history else "teacher: no steps")
    return EXIT_OK


def cmd_build_queries(cfg: ExperimentConfig, out_dir: str) -> int:
    teacher_path = os.path.join(out_dir, "teacher.mlp")
    _require_files(teacher_path)
    teacher = load_mlp(teacher_path)
    ds, _, _ = _teacher_training_set(cfg)
    if cfg.query.base_subset is not None:
        ds = subset(ds, cfg.query.base_subset, seed=cfg.query.spec.seed)
    if teacher.d != ds.d:
        raise ConfigError(
            f"teacher expects d={teacher.d} but dataset provides d={ds.d}"
        )
    aug = build(cfg.query.spec, ds)
    qs = query_teacher(teacher, aug)
    save_queryset(qs, os.path.join(out_dir, "queries.qs"))
    print(f"queries: Q={qs.Q} strategy={qs.provenance}")
    return EXIT_OK


def _student_path(out_dir: str, index: int) -> str:
    return os.path.join(out_dir, "students", f"student_{index:02d}.mlp")


def cmd_train_students(cfg: ExperimentConfig, out_dir: str, jobs: int = 1,
                       resume: bool = False) -> int:
    queries_path = os.path.join(out_dir, "queries.qs")
    _require_files(queries_path)
    qs = load_queryset(queries_path)
    n = cfg.students.n
    r_student = cfg.students.rho * cfg.teacher.hidden
    os.makedirs(os.path.join(out_dir, "students"), exist_ok=True)

    students: list[Mlp | None] = [None] * n
    summaries: list[tuple[int, float, int, str]] = []
    history_rows: list[str] = []
    todo = []
    for i in range(n):
        if resume and os.path.isfile(_student_path(out_dir, i)):
            students[i] = load_mlp(_student_path(out_dir, i))
            summaries.append((i, float("nan"), 0, "resumed"))
        else:
            todo.append((i, qs, r_student, cfg.students.train))
    if jobs > 1 and len(todo) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_indexed, todo))
    else:
        results = [_train_indexed(p) for p in todo]
    for index, net, history, message in sorted(results, key=lambda item: item[0]):
        if net is None:
            summaries.append((index, float("nan"), 0, f"diverged: {message}"))
            print(f"student {index}: DIVERGED ({message})", file=sys.stderr)
            continue
        students[index] = net
        save_mlp(net, _student_path(out_dir, index))
        final = history[-1][1] if history else float("nan")
        steps = history[-1][0] if history else 0
        summaries.append((index, final, steps, "trained"))
        history_rows += [
            f"{step},{loss!r},{lr!r},{index}" for step, loss, lr in history
        ]
    summaries.sort(key=lambda item: item[0])

    atomic_write_text(
        os.path.join(out_dir, "students", "losses.csv"),
        "\n".join(["step,loss,lr,student_index"] + history_rows) + "\n",
    )
    atomic_write_text(
        os.path.join(out_dir, "students", "ensemble_summary.csv"),
        "\n".join(
            ["student_index,final_loss,steps,status"]
            + [f"{i},{loss!r},{steps},{status}" for i, loss, steps, status in summaries]
        ) + "\n",
    )

    trained = [s for s in students if s is not None]
    finals = [loss for _, loss, _, status in summaries if status == "trained"]
    if finals:
        print(f"students: trained={len(finals)} final loss "
              f"min={min(finals):.3e} median={median(finals):.3e} max={max(finals):.3e}")
    if len(trained) >= 2 and cfg.eval_sets:
        _write_scatter(cfg, out_dir, qs, trained)
    if len(trained) < 2:
        print("fewer than two students trained; reconstruction is impossible",
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _write_scatter(cfg: ExperimentConfig, out_dir: str, qs, students: list[Mlp]) -> None:
    teacher = load_mlp(os.path.join(out_dir, "teacher.mlp"))
    _, mean, std = _teacher_training_set(cfg)
    eval_sets = [("train", qs.inputs)]
    for name, images_path, labels_path in cfg.eval_sets:
        _require_files(images_path, labels_path)
        raw = load_idx(images_path, labels_path, name=name)
        standardized, _, _ = standardize(raw, stats=(mean, std))
        eval_sets.append((name, standardized.images))
    rows = scatter_table(teacher, students, eval_sets)
    write_losses_csv(rows, os.path.join(out_dir, "losses.csv"))
    print(f"losses.csv: {len(rows)} rows over {len(eval_sets)} datasets")


def _report_csv(method: str, r: int, n_students: int, report, Q: int) -> str:
    if report is None:
        row = f"{method},{r},{n_students},0.0,nan,nan,nan,nan,{Q}"
    else:
        row = (
            f"{method},{r},{n_students},{report.m_over_r!r},{report.avg_dw!r},"
            f"{report.max_dw!r},{report.avg_da!r},{report.max_da!r},{Q}"
        )
    return REPORT_COLUMNS + "\n" + row + "\n"


def _report_text(method: str, report, n_students: int, Q: int) -> str:
    if report is None:
        return (f"method: {method}\nstudents: {n_students}\nQ: {Q}\n"
                "no accepted clusters; nothing reconstructed (m = 0)\n")
    lines = [
        f"method: {method}",
        f"students: {n_students}",
        f"Q: {Q}",
        f"recovered neurons: m={report.m} of r={report.r} (m/r = {report.m_over_r:.3f})",
        f"input-weight cosine distance: avg {report.avg_dw:.3e}, max {report.max_dw:.3e}",
        f"output-weight cosine distance: avg {report.avg_da:.3e}, max {report.max_da:.3e}",
        "matched pairs (recon -> teacher: d_w, d_a):",
    ]
    lines += [
        f"  {p.recon_index:3d} -> {p.teacher_index:3d}: {p.dw:.3e}, {p.da:.3e}"
        for p in report.pairs
    ]
    return "\n".join(lines) + "\n"


def cmd_reconstruct(cfg: ExperimentConfig, out_dir: str) -> int:
    teacher_path = os.path.join(out_dir, "teacher.mlp")
    queries_path = os.path.join(out_dir, "queries.qs")
    _require_files(teacher_path, queries_path)
    teacher = load_mlp(teacher_path)
    qs = load_queryset(queries_path)
    students = []
    for i in range(cfg.students.n):
        path = _student_path(out_dir, i)
        if os.path.isfile(path):
            students.append(load_mlp(path))
    if len(students) < 2:
        raise ConfigError("need at least two trained students; run train-students first")

    vectors = extract_neurons(students)
    result = cluster_neurons(vectors, len(students), cfg.reconstruct.gamma,
                             cfg.reconstruct.beta)
    method = qs.provenance
    report_csv_path = os.path.join(out_dir, "report.csv")
    report_txt_path = os.path.join(out_dir, "report.txt")
    if not any(result.accepted):
        atomic_write_text(report_csv_path,
                          _report_csv(method, teacher.r, len(students), None, qs.Q))
        atomic_write_text(report_txt_path,
                          _report_text(method, None, len(students), qs.Q))
        print("reconstruction: no accepted clusters (m = 0)", file=sys.stderr)
        return EXIT_EMPTY_RECONSTRUCTION

    biases = np.mean([s.c_out for s in students], axis=0)
    collapsed = collapse(result, qs.d, qs.c, output_bias=biases)
    tuned, history = fine_tune(collapsed, qs, cfg.reconstruct.fine_tune)
    report = evaluate_reconstruction(tuned, teacher)
    save_mlp(tuned, os.path.join(out_dir, "reconstructed.mlp"))
    atomic_write_text(os.path.join(out_dir, "finetune_history.csv"),
                      _history_csv(history))
    atomic_write_text(report_csv_path,
                      _report_csv(method, teacher.r, len(students), report, qs.Q))
    atomic_write_text(report_txt_path,
                      _report_text(method, report, len(students), qs.Q))
    print(f"reconstruction: m/r={report.m_over_r:.3f} "
          f"avg_dw={report.avg_dw:.3e} max_dw={report.max_dw:.3e}")
    return EXIT_OK


def cmd_pipeline(cfg: ExperimentConfig, out_dir: str, jobs: int = 1,
                 resume: bool = False) -> int:
    # validate every referenced path up front: a missing input must not leave
    # partial outputs behind
    paths = [cfg.teacher.train_images, cfg.teacher.train_labels]
    for _, images_path, labels_path in cfg.eval_sets:
        paths += [images_path, labels_path]
    _require_files(*paths)
    for stage in (
        lambda: cmd_train_teacher(cfg, out_dir),
        lambda: cmd_build_queries(cfg, out_dir),
        lambda: cmd_train_students(cfg, out_dir, jobs=jobs, resume=resume),
        lambda: cmd_reconstruct(cfg, out_dir),
    ):
        code = stage()
        if code != EXIT_OK:
            return code
    return EXIT_OK


def _resolve_out_dir(args, cfg: ExperimentConfig) -> str:
    return args.out or os.environ.get("NETRECON_OUT") or cfg.output_dir


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="netrecon",
        description="Recover hidden-layer weights of a one-hidden-layer network "
                    "from input-output queries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("train-teacher", "fit the network to be recovered on its labeled dataset"),
        ("build-queries", "construct query inputs and label them with teacher logits"),
        ("train-students", "train the ensemble of over-wide imitators"),
        ("reconstruct", "cluster student neurons, collapse, fine-tune and report"),
        ("pipeline", "run all four stages in order"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="override the output directory")
        if name in ("train-students", "pipeline"):
            p.add_argument("--jobs", type=int, default=1,
                           help="parallel student training processes")
            p.add_argument("--resume", action="store_true",
                           help="skip students whose model files already exist")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = _resolve_out_dir(args, cfg)
        if args.command == "train-teacher":
            return cmd_train_teacher(cfg, out_dir)
        if args.command == "build-queries":
            return cmd_build_queries(cfg, out_dir)
        if args.command == "train-students":
            return cmd_train_students(cfg, out_dir, jobs=args.jobs, resume=args.resume)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, out_dir)
        return cmd_pipeline(cfg, out_dir, jobs=args.jobs, resume=args.resume)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NetreconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())

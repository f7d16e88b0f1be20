"""Command-line entry point: generate, embed, train, eval, verify, report.

Every subcommand prints its effective configuration as one JSON line
before doing any work, so a run can be reproduced from its output alone.
Exit status: 0 success, 1 structured package error, 2 usage error.
"""

import argparse
import csv
import io
import json
import sys
import warnings

import numpy as np

from . import dataset, embfile, metrics, model, oracle, prompt, risk, trainer
from .errors import DmllError
from .fileio import atomic_write_text


def _print_config(args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    print(json.dumps({"effective_config": cfg}, sort_keys=True))


def _read_vocab_file(path: str) -> list:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            labels = [line.strip() for line in fh]
    except OSError as exc:
        raise DmllError(f"{path}: cannot read vocabulary file: {exc}") from exc
    labels = [lb for lb in labels if lb]
    if not labels:
        raise DmllError(f"{path}: vocabulary file has no labels")
    return labels


def _cmd_generate(args) -> int:
    full = dataset.random_multilabel_dataset(
        seed=args.seed,
        k=args.k,
        n=args.n,
        mean_positives=args.mean_positives,
        feature_dim=args.feature_dim,
    )
    dataset.save_dataset(full, args.out)
    determined = dataset.generate_determined(full, args.seed)
    dataset.save_dataset(determined, args.determined_out)
    stats = dataset.compute_stats(determined)
    print(
        json.dumps(
            {
                "n": stats.n,
                "k": stats.k,
                "positive_fraction": stats.positive_fraction,
                "chi_square": stats.chi_square,
                "chi_square_pvalue": stats.chi_square_pvalue,
            }
        )
    )
    return 0


def _cmd_embed(args) -> int:
    template = prompt.PromptTemplate(prefix=args.prefix)
    provider = prompt.SyntheticProvider(args.dim, args.seed)
    entries = {}
    for label in _read_vocab_file(args.vocab):
        tokens = prompt.compose_prompt_text(template, label).split()
        entries[" ".join(tokens)] = provider.embed(tokens)
    embfile.write_embeddings(args.out, entries)
    print(json.dumps({"entries": len(entries), "dim": args.dim, "out": args.out}))
    return 0


def _make_provider(args):
    if args.provider == "file":
        if not args.embeddings:
            raise DmllError("--provider file requires --embeddings")
        return prompt.FileProvider(args.embeddings)
    return prompt.SyntheticProvider(args.dim, args.seed)


def _cmd_train(args) -> int:
    if args.weighting == "oracle":
        raise DmllError(
            "weighting='oracle' needs true per-instance conditionals, which no"
            " file format carries; it is available via the library API and"
            " `verify --check unbiased`"
        )
    data = dataset.load_dataset(args.data, "determined", features_path=args.features)
    if len(data) == 0:
        raise DmllError(f"{args.data}: training dataset is empty")
    eval_data = None
    if args.eval:
        eval_data = dataset.load_dataset(args.eval, "full", features_path=args.eval_features)
    provider = _make_provider(args)
    large_vocab = _read_vocab_file(args.vocab) if args.vocab else list(data.vocab.names)
    config = trainer.TrainConfig(
        epochs=args.epochs,
        prompt_update_period=args.period,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        sigma=args.sigma,
        loss_mode=args.loss_mode,
        weighting=args.weighting,
        epsilon=args.epsilon,
    )
    params, state, history = trainer.train(data, large_vocab, provider, config, eval_data=eval_data)
    model.save_model(params, args.model_out)
    if args.history_out:
        atomic_write_text(args.history_out, trainer.history_to_jsonl(history))
    if args.history_csv:
        atomic_write_text(args.history_csv, trainer.history_to_csv(history))
    summary = {
        "final_loss": history.records[-1].loss,
        "lambdas": list(state.lambdas),
        "model_out": args.model_out,
    }
    if history.records[-1].metrics is not None:
        summary["final_metrics"] = history.records[-1].metrics
    print(json.dumps(summary))
    return 0


def _cmd_eval(args) -> int:
    data = dataset.load_dataset(args.data, "full", features_path=args.features)
    params = model.load_model(args.model, expect_k=data.vocab.k)
    keep = [i for i in data.instances if 0 < len(i.positives) < data.vocab.k]
    if not keep:
        raise DmllError("no instance has both relevant and irrelevant labels; metrics undefined")
    X = np.stack([i.features for i in keep])
    scores = model.forward_batch(params, X)[0]
    sm = metrics.ScoreMatrix(scores, [i.positives for i in keep])
    result = metrics.all_metrics(sm)
    result["n_evaluated"] = len(keep)
    result["n_skipped"] = len(data) - len(keep)
    print(json.dumps(result, sort_keys=True))
    if args.out:
        atomic_write_text(args.out, json.dumps(result, sort_keys=True) + "\n")
    if args.per_class_csv:
        rel = sm.relevance_mask()
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["class", "label", "positives", "average_precision"])
        for j in range(data.vocab.k):
            if rel[:, j].any():
                writer.writerow([j, data.vocab.names[j], int(rel[:, j].sum()), _class_ap(sm, j)])
            else:
                writer.writerow([j, data.vocab.names[j], 0, ""])
        atomic_write_text(args.per_class_csv, buf.getvalue())
    return 0


def _class_ap(sm: metrics.ScoreMatrix, j: int) -> float:
    single = metrics.ScoreMatrix(sm.scores[:, [j]], [{0} if j in t else set() for t in sm.truths])
    return metrics.mean_average_precision(single)


def _check_eq5(args) -> dict:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    kmax = min(args.k, 12)
    for k in range(1, kmax + 1):
        for _ in range(args.trials):
            f = rng.uniform(0.02, 0.98, size=k)
            d = rng.uniform(0.0, 1.0, size=k)
            h = risk.expected_loss_H(f, d)
            e = oracle.enumerate_expected_loss(f, d)
            worst = max(worst, abs(h - e) / max(abs(e), 1e-300))
    return {"check": "eq5", "k_max": kmax, "trials_per_k": args.trials, "max_rel_err": worst, "pass": worst <= 1e-10}


def _check_unbiased(args) -> dict:
    reports = []
    ok = 0
    for w in range(args.trials):
        world = oracle.make_world(args.seed + w, k=6, d=8)
        params = model.init(args.seed + 1000 + w, d=8, m=5, k=6)
        rep = oracle.unbiasedness_report(world, params, args.samples, seed=args.seed + w)
        reports.append({"world": w, "z_score": rep["z_score"], "true_risk": rep["true_risk"], "estimated_risk": rep["estimated_risk"]})
        ok += rep["z_score"] < 3.0
    need = args.trials - 1 if args.trials > 1 else 1
    return {"check": "unbiased", "worlds": args.trials, "samples": args.samples, "within_3se": ok, "required": need, "reports": reports, "pass": ok >= need}


def _check_metrics(args) -> dict:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(2, 7))
        scores = np.round(rng.standard_normal((n, k)), 1)  # coarse grid forces ties
        truths = [set(rng.choice(k, size=int(rng.integers(1, k)), replace=False).tolist()) for _ in range(n)]
        if not any(truths[i] for i in range(n)):
            continue
        sm = metrics.ScoreMatrix(scores, truths)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pairs = [
                (metrics.mean_average_precision(sm), oracle.average_precision_bruteforce(scores, truths)),
                (metrics.one_error(sm), oracle.one_error_bruteforce(scores, truths)),
                (metrics.ranking_loss(sm), oracle.ranking_loss_bruteforce(scores, truths)),
                (metrics.coverage(sm), oracle.coverage_bruteforce(scores, truths)),
            ]
        worst = max(worst, max(abs(a - b) for a, b in pairs))
    return {"check": "metrics", "trials": args.trials, "max_abs_err": worst, "pass": worst <= 1e-12}


def _check_grad(args) -> dict:
    worst = 0.0
    for t in range(args.trials):
        worst = max(worst, float(oracle.gradient_check_random(args.seed + t)))
    return {"check": "grad", "trials": args.trials, "max_rel_err": worst, "pass": worst < 1e-4}


def _cmd_verify(args) -> int:
    runner = {
        "eq5": _check_eq5,
        "unbiased": _check_unbiased,
        "metrics": _check_metrics,
        "grad": _check_grad,
    }[args.check]
    report = runner(args)
    print(json.dumps(report))
    return 0 if report["pass"] else 1


def _cmd_report(args) -> int:
    try:
        with open(args.history, "r", encoding="utf-8") as fh:
            history = trainer.history_from_jsonl(fh.read())
    except OSError as exc:
        raise DmllError(f"{args.history}: cannot read history file: {exc}") from exc
    atomic_write_text(args.out, trainer.history_to_csv(history))
    print(json.dumps({"epochs": len(history.records), "out": args.out}))
    return 0


_VERIFY_TRIAL_DEFAULTS = {"eq5": 100, "unbiased": 5, "metrics": 100, "grad": 20}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmll", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic full + determined dataset")
    p.add_argument("--out", required=True, help="full-label dataset path (JSON lines)")
    p.add_argument("--determined-out", required=True, help="determined dataset path")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--mean-positives", type=float, default=1.38)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("embed", help="build an embedding file with the synthetic provider")
    p.add_argument("--vocab", required=True, help="label file, one label per line")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="a photo of a {class}")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("train", help="train on a determined dataset")
    p.add_argument("--data", required=True, help="determined dataset path")
    p.add_argument("--features", default=None, help="feature sidecar for --data")
    p.add_argument("--eval", default=None, help="full-label dataset for metric snapshots")
    p.add_argument("--eval-features", default=None)
    p.add_argument("--vocab", default=None, help="large similar-label vocabulary file")
    p.add_argument("--provider", choices=["synthetic", "file"], default="synthetic")
    p.add_argument("--embeddings", default=None, help="embedding file for --provider file")
    p.add_argument("--dim", type=int, default=32, help="synthetic provider dimension")
    p.add_argument("--sigma", type=int, default=5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--period", type=int, default=1, help="prompt update period in epochs")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--weight-decay", type=float, default=5e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss-mode", choices=list(trainer.LOSS_MODES), default="rc")
    p.add_argument("--weighting", choices=["corrected", "estimated", "oracle"], default="corrected")
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--model-out", required=True)
    p.add_argument("--history-out", default=None, help="history JSON lines path")
    p.add_argument("--history-csv", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="rank metrics of a saved model on full-label data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="full-label dataset path")
    p.add_argument("--features", default=None)
    p.add_argument("--out", default=None, help="also write the metrics JSON here")
    p.add_argument("--per-class-csv", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("verify", help="run a ground-truth oracle check")
    p.add_argument(
        "--check",
        choices=["eq5", "unbiased", "metrics", "grad"],
        required=True,
        help="eq5: closed-form expected set loss vs powerset enumeration; "
        "unbiased: determined risk estimator vs true risk by Monte Carlo; "
        "metrics: vectorized metrics vs counting implementations; "
        "grad: analytic gradients vs central differences",
    )
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("report", help="render a history file to CSV")
    p.add_argument("--history", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "trials", None) is None and args.command == "verify":
        args.trials = _VERIFY_TRIAL_DEFAULTS[args.check]
    _print_config(args)
    try:
        return args.func(args)
    except DmllError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

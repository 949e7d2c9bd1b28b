"""Subcommand CLI: synth, vocab, repr, cluster, filter, train, assign, eval,
run, report, diagnose.

Exit codes: 0 ok, 2 config error, 3 stage failure, 4 invariant violation.
The LAIC_SEED environment variable overrides any configured seed.  Commands
that write into an output directory hold a lock file for its duration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import embio
from . import pipeline as pl
from .centers import SemanticCenters, TrainConfig
from .errors import ConfigError, LaicError
from .filtering import PseudoLabelState
from .synth import make_synthetic


def _env_seed(seed: int) -> int:
    raw = os.environ.get("LAIC_SEED")
    if raw is None:
        return seed
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"LAIC_SEED must be an integer, got {raw!r}") from e


@contextmanager
def _locked(out_dir: str | Path):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(out / ".laic.lock")
    try:
        with lock.acquire(timeout=0):
            yield out
    except Timeout:
        raise LaicError(f"output directory {out} is locked by another process")


def _add_out(p, required=True):
    p.add_argument("--out", required=required, help="output directory")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laic",
        description="Language-assisted image clustering over precomputed embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-cluster benchmark")
    _add_out(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n-per", type=int, default=200)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--noun-per-class", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--strong-views", type=int, default=2)
    p.add_argument("--weak-views", type=int, default=2)
    p.add_argument("--distractors", type=int, default=None)
    _add_seed(p)

    p = sub.add_parser("vocab", help="select the candidate noun set")
    p.add_argument("--x", required=True)
    p.add_argument("--w", required=True)
    _add_out(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--theta", type=int, default=2)
    p.add_argument("--k-tilde", type=int, default=None)
    p.add_argument("--small-classes", action="store_true")
    p.add_argument("--restarts", type=int, default=10)
    _add_seed(p)

    p = sub.add_parser("repr", help="ridge image-text representation")
    p.add_argument("--x", required=True)
    p.add_argument("--u", default=None, help="candidate set (default: <out>/vocab/u.emb)")
    _add_out(p)
    p.add_argument("--gamma", type=float, default=5.0)

    p = sub.add_parser("cluster", help="K-means on C and on X")
    p.add_argument("--x", required=True)
    _add_out(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--restarts", type=int, default=10)
    _add_seed(p)

    p = sub.add_parser("filter", help="neighbor-consistency pseudo-label filtering")
    _add_out(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--k-hat", type=int, default=None)
    p.add_argument("--tau", type=float, default=1.0)

    p = sub.add_parser("train", help="optimize semantic centers")
    p.add_argument("--x", required=True)
    p.add_argument("--views", default=None)
    _add_out(p)
    p.add_argument("--k", type=int, required=True)
    _add_train_flags(p)
    _add_seed(p)

    p = sub.add_parser("assign", help="nearest-center assignment")
    p.add_argument("--x", required=True)
    _add_out(p)

    p = sub.add_parser("eval", help="metrics, filter gain, nouns, heatmap")
    p.add_argument("--x", required=True)
    p.add_argument("--truth", default=None)
    _add_out(p)
    p.add_argument("--no-heatmap", action="store_true")

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--config", default=None, help="TOML or JSON config file")
    p.add_argument("--x", dest="x_path", default=None)
    p.add_argument("--w", dest="w_path", default=None)
    p.add_argument("--views", dest="views_dir", default=None)
    p.add_argument("--truth", dest="truth_path", default=None)
    p.add_argument("--out", dest="out_dir", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--theta", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--k-hat", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--k-tilde", type=int, default=None)
    p.add_argument("--small-classes", action="store_true", default=None)
    p.add_argument("--restarts", dest="kmeans_restarts", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-heatmap", action="store_true", default=None)
    _add_train_flags(p, run_mode=True)

    p = sub.add_parser("report", help="rebuild report.json from artifacts")
    _add_out(p)

    p = sub.add_parser("diagnose", help="pairwise-similarity statistics CSV")
    p.add_argument("--x", required=True)
    p.add_argument("--w", required=True)
    _add_out(p)
    p.add_argument("--max-pairs", type=int, default=200_000)
    _add_seed(p)

    return parser


def _add_train_flags(p, run_mode: bool = False):
    p.add_argument("--epochs", type=int, default=None if run_mode else 20)
    p.add_argument("--batch-size", type=int, default=None if run_mode else 32)
    p.add_argument("--lr", type=float, default=None if run_mode else 2e-3)
    p.add_argument("--q", type=float, default=None if run_mode else 0.8)
    p.add_argument("--lambda1", type=float, default=None if run_mode else 2.0)
    p.add_argument("--lambda2", type=float, default=None if run_mode else 0.1)
    p.add_argument("--temperature", type=float, default=None if run_mode else 0.01)
    p.add_argument(
        "--consistency-on", choices=("logits", "softmax"),
        default=None if run_mode else "logits",
    )
    p.add_argument("--no-sup", action="store_true", default=None if run_mode else False)
    p.add_argument("--no-con", action="store_true", default=None if run_mode else False)
    p.add_argument("--no-ent", action="store_true", default=None if run_mode else False)


def _train_config_from_args(args, seed: int) -> TrainConfig:
    return TrainConfig(
        q=args.q,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr0=args.lr,
        temperature=args.temperature,
        seed=seed,
        enable_sup=not args.no_sup,
        enable_con=not args.no_con,
        enable_ent=not args.no_ent,
        consistency_on=args.consistency_on,
    )


def _load_x(path: str) -> embio.EmbeddingMatrix:
    x = embio.read_embedding(path)
    return x if x.normalized else embio.l2_normalize_rows(x)


def _load_state(out: Path) -> PseudoLabelState:
    pseudo = embio.read_labels(out / "cluster" / "pseudo.lab")
    selected_meta = json.loads((out / "filter" / "selected.json").read_text())
    selected = np.asarray(selected_meta["indices"], dtype=np.int64)
    unselected = np.setdiff1d(np.arange(len(pseudo)), selected, assume_unique=True)
    return PseudoLabelState(
        labels=pseudo,
        neighbors=np.load(out / "filter" / "neighbors.npy"),
        alpha=np.load(out / "filter" / "alpha.npy"),
        selected=selected,
        unselected=unselected,
        tau_effective=selected_meta["tau_effective"],
    )


def _minimal_config(out: str, **kw) -> pl.PipelineConfig:
    defaults = dict(x_path="", w_path="", k=2, out_dir=str(out))
    defaults.update(kw)
    return pl.PipelineConfig(**defaults)


# --- command implementations ---

def cmd_synth(args) -> int:
    seed = _env_seed(args.seed)
    with _locked(args.out) as out:
        x, w, truth, views = make_synthetic(
            k=args.k,
            n_per=args.n_per,
            d=args.d,
            noun_per_class=args.noun_per_class,
            noise=args.noise,
            seed=seed,
            n_strong_views=args.strong_views,
            n_weak_views=args.weak_views,
            n_distractors=args.distractors,
        )
        embio.write_embedding(x, out / "x.emb")
        pl.dump_json(
            {"names": [f"sample{i}" for i in range(x.rows)],
             "source": f"synthetic(seed={seed})", "dim": x.dim},
            out / "x.json",
        )
        embio.write_vocab(w, out / "w.emb", source=f"synthetic(seed={seed})")
        embio.write_labels(truth, out / "truth.lab")
        embio.write_views(views, out / "views")
    print(f"wrote synthetic benchmark to {out}")
    return 0


def cmd_vocab(args) -> int:
    with _locked(args.out) as out:
        cfg = _minimal_config(
            out, k=args.k, theta=args.theta, k_tilde=args.k_tilde,
            small_classes=args.small_classes, kmeans_restarts=args.restarts,
            seed=_env_seed(args.seed),
        )
        x = _load_x(args.x)
        w = embio.read_vocab(args.w)
        selection = pl.stage_vocab(x, w, cfg, out)
    print(f"selected {len(selection.union)} candidate nouns")
    return 0


def cmd_repr(args) -> int:
    with _locked(args.out) as out:
        u_path = args.u or out / "vocab" / "u.emb"
        x = _load_x(args.x)
        u = embio.read_vocab(u_path)
        cfg = _minimal_config(out, gamma=args.gamma)
        rep = pl.stage_repr(x, u, cfg, out)
    print(f"representation matrix {rep.source_dims[0]}x{rep.source_dims[1]} written")
    return 0


def cmd_cluster(args) -> int:
    with _locked(args.out) as out:
        x = _load_x(args.x)
        rep = pl.load_repr(out)
        cfg = _minimal_config(
            out, k=args.k, kmeans_restarts=args.restarts, seed=_env_seed(args.seed)
        )
        on_c, on_x = pl.stage_cluster(x, rep, cfg, out)
    print(f"kmeans on C inertia {on_c.inertia:.6g}; on X inertia {on_x.inertia:.6g}")
    return 0


def cmd_filter(args) -> int:
    with _locked(args.out) as out:
        rep = pl.load_repr(out)
        pseudo = embio.read_labels(out / "cluster" / "pseudo.lab")
        cfg = _minimal_config(out, k=args.k, k_hat=args.k_hat, tau=args.tau)
        state = pl.stage_filter(rep, pseudo, cfg, out)
    print(
        f"selected {state.selected.size}/{len(pseudo)} samples "
        f"at tau_effective={state.tau_effective}"
    )
    return 0


def cmd_train(args) -> int:
    with _locked(args.out) as out:
        seed = _env_seed(args.seed)
        x = _load_x(args.x)
        views = embio.read_views(args.views) if args.views else None
        if views is None:
            views = embio.ViewBundle(base=x, strong_views=(x,), weak_views=(x,))
        rep = pl.load_repr(out)
        state = _load_state(out)
        train = _train_config_from_args(args, seed)
        cfg = _minimal_config(out, k=args.k, seed=seed, train=train)
        final = pl.stage_train(x, rep, views, state, cfg, out)
    print(f"trained {final.k} centers over {final.step} steps")
    return 0


def cmd_assign(args) -> int:
    with _locked(args.out) as out:
        x = _load_x(args.x)
        emb = embio.read_embedding(out / "train" / "centers64.emb")
        centers = SemanticCenters(emb.values.astype(np.float64, copy=True))
        labels = pl.stage_assign(x, centers, out)
    print(f"assigned {len(labels)} samples to {centers.k} clusters")
    return 0


def cmd_eval(args) -> int:
    with _locked(args.out) as out:
        x = _load_x(args.x)
        rep = pl.load_repr(out)
        on_x = embio.read_labels(out / "cluster" / "xbase.lab")
        pseudo = embio.read_labels(out / "cluster" / "pseudo.lab")
        final_labels = embio.read_labels(out / "assign" / "final.lab")
        state = _load_state(out)
        emb = embio.read_embedding(out / "train" / "centers64.emb")
        centers = SemanticCenters(emb.values.astype(np.float64, copy=True))
        u = embio.read_vocab(out / "vocab" / "u.emb")
        truth = embio.read_labels(args.truth) if args.truth else None
        cfg = _minimal_config(out, export_heatmap=not args.no_heatmap)
        pl.stage_eval(
            rep, on_x, pseudo, final_labels, state, centers, u, truth, cfg, out
        )
    print(f"evaluation artifacts written to {out / 'eval'}")
    return 0


def cmd_run(args) -> int:
    data = {}
    if args.config:
        data.update(pl.load_config_file(args.config))
    for key in pl._CONFIG_KEYS - {"train"}:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.no_heatmap:
        data["export_heatmap"] = False
    train_data = dict(data.get("train", {}))
    for flag, key in (
        ("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "lr0"),
        ("q", "q"), ("lambda1", "lambda1"), ("lambda2", "lambda2"),
        ("temperature", "temperature"), ("consistency_on", "consistency_on"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            train_data[key] = val
    for flag, key in (("no_sup", "enable_sup"), ("no_con", "enable_con"),
                      ("no_ent", "enable_ent")):
        if getattr(args, flag, None):
            train_data[key] = False
    data["train"] = train_data

    missing = [k for k in ("x_path", "w_path", "k", "out_dir") if k not in data]
    if missing:
        raise ConfigError(f"missing required config values: {missing}")
    data["seed"] = _env_seed(data.get("seed", 0))
    cfg = pl.config_from_mapping(data)
    with _locked(cfg.out_dir):
        report = pl.run_pipeline(cfg)
    final = report["checkpoints"]["final"]
    if final is not None:
        print(
            f"final: NMI={final['nmi']:.4f} ACC={final['acc']:.4f} "
            f"ARI={final['ari']:.4f}"
        )
    print(f"report written to {Path(cfg.out_dir) / 'report.json'}")
    return 0


def cmd_report(args) -> int:
    with _locked(args.out) as out:
        pl.assemble_report(out)
    print(f"report written to {out / 'report.json'}")
    return 0


def cmd_diagnose(args) -> int:
    with _locked(args.out) as out:
        x = _load_x(args.x)
        w = embio.read_vocab(args.w)
        rows = pl.diagnose(x, w, max_pairs=args.max_pairs, seed=_env_seed(args.seed))
        pl.write_diagnose_csv(rows, out / "diagnose.csv")
    for row in rows:
        print(f"{row['pairs']}: mean={row['mean']:.4f} std={row['std']:.4f}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "vocab": cmd_vocab,
    "repr": cmd_repr,
    "cluster": cmd_cluster,
    "filter": cmd_filter,
    "train": cmd_train,
    "assign": cmd_assign,
    "eval": cmd_eval,
    "run": cmd_run,
    "report": cmd_report,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except LaicError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

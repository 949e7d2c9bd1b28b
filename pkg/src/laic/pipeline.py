"""End-to-end orchestration: stages, persistence, and the run report.

Every stage writes its artifacts (plus a content-hash manifest) under its own
subdirectory of the output directory, so any stage can be rerun standalone
from the previous checkpoint and reproduce identical bytes.  A fixed seed
makes the whole run deterministic.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import centers as centers_mod
from . import embio
from .cluster import KMeansResult, MetricsReport, evaluate, kmeans
from .centers import SemanticCenters, TrainConfig
from .embio import EmbeddingMatrix, LabelVector, ViewBundle, VocabSet
from .errors import ConfigError, IoFailure, LaicError, StageError
from .filtering import (
    PseudoLabelState,
    consistency_scores,
    filter_gain_report,
    knn_graph,
    select_with_relaxation,
)
from .ridge import ReprMatrix, ridge_representation
from .vocab import (
    CandidateSelection,
    compute_fine_centers,
    default_k_tilde,
    select_candidates,
)
from .viz import export_heatmap

NMI_NORMALIZATION = "arithmetic"

STAGES = ("vocab", "repr", "cluster", "filter", "train", "assign", "eval")


@dataclass(frozen=True)
class PipelineConfig:
    x_path: str
    w_path: str
    k: int
    out_dir: str
    views_dir: str | None = None
    truth_path: str | None = None
    theta: int = 2
    gamma: float = 5.0
    k_hat: int | None = None  # None: 10, or 1 when k > 50
    tau: float = 1.0
    small_classes: bool = False
    k_tilde: int | None = None  # explicit override of the fine-center count
    kmeans_restarts: int = 10
    seed: int = 0
    export_heatmap: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)

    def resolved_k_hat(self) -> int:
        if self.k_hat is not None:
            return self.k_hat
        return 10 if self.k <= 50 else 1

    def effective_train(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def validate(self) -> None:
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.theta < 1:
            raise ConfigError(f"theta must be >= 1, got {self.theta}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.resolved_k_hat() < 1:
            raise ConfigError("k_hat must be >= 1")
        for label, p in (("x_path", self.x_path), ("w_path", self.w_path)):
            if not Path(p).exists():
                raise ConfigError(f"{label} does not exist: {p}")
        if self.views_dir is not None and not Path(self.views_dir).exists():
            raise ConfigError(f"views_dir does not exist: {self.views_dir}")
        if self.truth_path is not None and not Path(self.truth_path).exists():
            raise ConfigError(f"truth_path does not exist: {self.truth_path}")
        if self.train.enable_con and self.views_dir is None:
            raise ConfigError(
                "consistency loss enabled but no views_dir given "
                "(disable it or provide augmented views)"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = asdict(self.effective_train())
        d["k_hat"] = self.resolved_k_hat()
        return d


_CONFIG_KEYS = {
    "x_path", "w_path", "k", "out_dir", "views_dir", "truth_path", "theta",
    "gamma", "k_hat", "tau", "small_classes", "k_tilde", "kmeans_restarts",
    "seed", "export_heatmap", "train",
}
_TRAIN_KEYS = {
    "q", "lambda1", "lambda2", "epochs", "batch_size", "lr0", "temperature",
    "seed", "enable_sup", "enable_con", "enable_ent", "consistency_on",
}


def config_from_mapping(data: dict) -> PipelineConfig:
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    train_data = dict(data.get("train", {}))
    unknown = set(train_data) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    try:
        train = TrainConfig(**train_data)
        return PipelineConfig(**{**data, "train": train})
    except (TypeError, LaicError) as e:
        raise ConfigError(f"invalid config: {e}") from e


def load_config_file(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    if p.suffix == ".json":
        return json.loads(p.read_text())
    if p.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    raise ConfigError(f"config file must be .toml or .json, got {p.name}")


# --- deterministic JSON / manifests ---

def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(stage_dir: Path) -> None:
    hashes = {}
    for f in sorted(stage_dir.iterdir()):
        if f.name == "manifest.json" or f.is_dir():
            continue
        hashes[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    dump_json({"files": hashes}, stage_dir / "manifest.json")


def _stage_dir(out: Path, name: str) -> Path:
    d = out / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _as_f32(values: np.ndarray, normalized: bool = False) -> EmbeddingMatrix:
    return EmbeddingMatrix(values.astype(np.float32), normalized=normalized)


def _as_f64(values: np.ndarray, normalized: bool = False) -> EmbeddingMatrix:
    return EmbeddingMatrix(values.astype(np.float64), normalized=normalized)


# --- inputs ---

def load_inputs(
    cfg: PipelineConfig,
) -> tuple[EmbeddingMatrix, VocabSet, ViewBundle, LabelVector | None]:
    x = embio.read_embedding(cfg.x_path)
    if not x.normalized:
        x = embio.l2_normalize_rows(x)
    w = embio.read_vocab(cfg.w_path)
    if cfg.views_dir is not None:
        views = embio.read_views(cfg.views_dir)
        if views.base.values.shape != x.values.shape:
            raise ConfigError(
                f"views base shape {views.base.values.shape} does not match "
                f"X shape {x.values.shape}"
            )
    else:
        views = ViewBundle(base=x, strong_views=(x,), weak_views=(x,))
    truth = embio.read_labels(cfg.truth_path) if cfg.truth_path else None
    if truth is not None and len(truth) != x.rows:
        raise ConfigError(f"{len(truth)} truth labels for {x.rows} samples")
    return x, w, views, truth


def load_repr(out: Path) -> ReprMatrix:
    """Reload the exact 64-bit representation matrix from a checkpoint."""
    emb = embio.read_embedding(Path(out) / "repr" / "c64.emb")
    meta_path = Path(out) / "repr" / "meta.json"
    try:
        meta = json.loads(meta_path.read_text())
    except OSError as e:
        raise IoFailure(f"missing representation metadata {meta_path}: {e}") from e
    return ReprMatrix(
        c=emb.values.astype(np.float64, copy=True),
        gamma=meta["gamma"],
        source_dims=(meta["n"], meta["m"], meta["d"]),
    )


# --- stages ---

def stage_vocab(
    x: EmbeddingMatrix, w: VocabSet, cfg: PipelineConfig, out: Path
) -> CandidateSelection:
    k_tilde = cfg.k_tilde
    if k_tilde is None:
        k_tilde = default_k_tilde(x.rows, cfg.k, cfg.small_classes)
    k_tilde = min(k_tilde, x.rows)
    fine = compute_fine_centers(x, k_tilde, seed=cfg.seed, restarts=cfg.kmeans_restarts)
    selection = select_candidates(w, fine, cfg.theta)

    d = _stage_dir(out, "vocab")
    embio.write_embedding(_as_f64(fine.centers), d / "fine_centers.emb")
    embio.write_labels(fine.assignment, d / "fine_assignment.lab")
    embio.write_vocab(selection.union, d / "u.emb", source="vocab-select")
    provenance = {
        "k_tilde": k_tilde,
        "theta": cfg.theta,
        "per_center": [
            {"center": r, "nouns": [w.names[i] for i in top]}
            for r, top in enumerate(selection.per_center_top)
        ],
        "union_size": len(selection.union),
    }
    meta = json.loads((d / "u.json").read_text())
    meta.update(provenance)
    dump_json(meta, d / "u.json")
    write_manifest(d)
    return selection


def stage_repr(
    x: EmbeddingMatrix, u: VocabSet, cfg: PipelineConfig, out: Path
) -> ReprMatrix:
    rep = ridge_representation(x, u, cfg.gamma)
    d = _stage_dir(out, "repr")
    embio.write_embedding(_as_f32(rep.c), d / "c.emb")
    embio.write_embedding(_as_f64(rep.c), d / "c64.emb")
    dump_json(
        {"gamma": rep.gamma, "n": rep.source_dims[0], "m": rep.source_dims[1],
         "d": rep.source_dims[2]},
        d / "meta.json",
    )
    write_manifest(d)
    return rep


def stage_cluster(
    x: EmbeddingMatrix, rep: ReprMatrix, cfg: PipelineConfig, out: Path
) -> tuple[KMeansResult, KMeansResult]:
    on_c = kmeans(rep.c, cfg.k, seed=cfg.seed, restarts=cfg.kmeans_restarts)
    on_x = kmeans(x.values, cfg.k, seed=cfg.seed, restarts=cfg.kmeans_restarts)
    d = _stage_dir(out, "cluster")
    embio.write_labels(on_c.labels, d / "pseudo.lab")
    embio.write_labels(on_x.labels, d / "xbase.lab")
    dump_json(
        {
            "kmeans_on_c": {"inertia": on_c.inertia, "iterations": on_c.iterations},
            "kmeans_on_x": {"inertia": on_x.inertia, "iterations": on_x.iterations},
        },
        d / "meta.json",
    )
    write_manifest(d)
    return on_c, on_x


def stage_filter(
    rep: ReprMatrix, pseudo: LabelVector, cfg: PipelineConfig, out: Path
) -> PseudoLabelState:
    neighbors = knn_graph(rep.c, cfg.resolved_k_hat())
    alpha = consistency_scores(pseudo, neighbors)
    state = select_with_relaxation(pseudo, neighbors, alpha, cfg.tau, cfg.k)
    d = _stage_dir(out, "filter")
    np.save(d / "neighbors.npy", neighbors)
    np.save(d / "alpha.npy", alpha)
    dump_json(
        {
            "indices": [int(i) for i in state.selected],
            "labels": [int(pseudo.values[i]) for i in state.selected],
            "tau_effective": state.tau_effective,
        },
        d / "selected.json",
    )
    write_manifest(d)
    return state


def stage_train(
    x: EmbeddingMatrix,
    rep: ReprMatrix,
    views: ViewBundle,
    state: PseudoLabelState,
    cfg: PipelineConfig,
    out: Path,
) -> SemanticCenters:
    train_cfg = cfg.effective_train()
    if train_cfg.enable_sup:
        init = centers_mod.init_centers(
            x, rep.c, state.labels, state.selected, cfg.k, seed=cfg.seed
        )
    else:
        # with the supervised term ablated, a class-mean init would smuggle
        # pseudo-label information past the ablation
        init = centers_mod.random_unit_centers(cfg.k, x.dim, seed=cfg.seed)
    final, trace = centers_mod.train_centers(
        views,
        state.selected,
        state.labels.values[state.selected],
        state.unselected,
        train_cfg,
        init,
    )
    d = _stage_dir(out, "train")
    dump_json({"k": cfg.k, "seed": cfg.seed, "train": asdict(train_cfg)}, d / "meta.json")
    embio.write_embedding(_as_f64(init), d / "init64.emb")
    embio.write_embedding(_as_f32(final.s, normalized=True), d / "centers.emb")
    embio.write_embedding(_as_f64(final.s, normalized=True), d / "centers64.emb")
    with open(d / "trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "sup", "con", "ent", "total", "lr"])
        for row in trace:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    write_manifest(d)
    return final


def stage_assign(
    x: EmbeddingMatrix, final: SemanticCenters, out: Path
) -> LabelVector:
    labels = centers_mod.assign(x, final)
    d = _stage_dir(out, "assign")
    embio.write_labels(labels, d / "final.lab")
    write_manifest(d)
    return labels


def nearest_noun_report(
    s: SemanticCenters, u: VocabSet, matching: tuple[int, ...] | None = None
) -> list[dict]:
    """Most similar candidate noun per center; ties go to the lowest index."""
    uv = u.embeddings.values.astype(np.float64, copy=False)
    un = np.linalg.norm(uv, axis=1)
    un = np.where(un > 0, un, 1.0)
    sn = np.linalg.norm(s.s, axis=1)
    sims = (s.s @ uv.T) / np.outer(sn, un)
    rows = []
    for k in range(s.k):
        best = int(np.argmax(sims[k]))
        row = {"center": k, "noun": u.names[best], "cosine": float(sims[k, best])}
        if matching is not None:
            row["matched_truth_class"] = int(matching[k])
        rows.append(row)
    return rows


def _metrics_dict(m: MetricsReport) -> dict:
    d = m.to_dict()
    d["nmi_normalization"] = NMI_NORMALIZATION
    return d


def stage_eval(
    rep: ReprMatrix,
    on_x_labels: LabelVector,
    pseudo: LabelVector,
    final_labels: LabelVector,
    state: PseudoLabelState,
    final_centers: SemanticCenters,
    u: VocabSet,
    truth: LabelVector | None,
    cfg: PipelineConfig,
    out: Path,
) -> dict:
    d = _stage_dir(out, "eval")
    result: dict = {
        "checkpoints": {"kmeans_on_x": None, "kmeans_on_c": None, "final": None},
        "filter": {
            "num_selected": int(state.selected.size),
            "fraction_selected": state.selected.size / len(state.labels),
            "tau_effective": state.tau_effective,
        },
    }
    matching = None
    if truth is not None:
        m_x = evaluate(on_x_labels, truth)
        m_c = evaluate(pseudo, truth)
        m_f = evaluate(final_labels, truth)
        matching = m_f.matching
        result["checkpoints"] = {
            "kmeans_on_x": _metrics_dict(m_x),
            "kmeans_on_c": _metrics_dict(m_c),
            "final": _metrics_dict(m_f),
        }
        dump_json(_metrics_dict(m_x), d / "metrics_kmeans_on_x.json")
        dump_json(_metrics_dict(m_c), d / "metrics_kmeans_on_c.json")
        dump_json(_metrics_dict(m_f), d / "metrics_final.json")
        acc_before, acc_after, fraction = filter_gain_report(state, truth)
        result["filter"].update(
            {"acc_before": acc_before, "acc_after": acc_after,
             "fraction_selected": fraction}
        )
        if cfg.export_heatmap:
            stats = export_heatmap(rep.c, truth, d / "heatmap.png")
            result["heatmap_stats"] = stats
    dump_json(result["filter"], d / "filter_gain.json")
    nouns = nearest_noun_report(final_centers, u, matching)
    result["nearest_nouns"] = nouns
    dump_json(nouns, d / "nearest_nouns.json")
    write_manifest(d)
    return result


# --- full run ---

def run_pipeline(cfg: PipelineConfig) -> dict:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(cfg.to_dict(), out / "config.json")

    def run_stage(name, fn, *args):
        try:
            return fn(*args)
        except Exception as e:
            raise StageError(name, e) from e

    x, w, views, truth = run_stage("load", load_inputs, cfg)
    selection = run_stage("vocab", stage_vocab, x, w, cfg, out)
    rep = run_stage("repr", stage_repr, x, selection.union, cfg, out)
    on_c, on_x = run_stage("cluster", stage_cluster, x, rep, cfg, out)
    state = run_stage("filter", stage_filter, rep, on_c.labels, cfg, out)
    final = run_stage("train", stage_train, x, rep, views, state, cfg, out)
    final_labels = run_stage("assign", stage_assign, x, final, out)
    run_stage(
        "eval",
        stage_eval,
        rep, on_x.labels, on_c.labels, final_labels, state, final,
        selection.union, truth, cfg, out,
    )
    return run_stage("report", assemble_report, out)


def assemble_report(out: Path) -> dict:
    """Compose report.json purely from persisted stage artifacts."""
    out = Path(out)

    def read_json(rel):
        p = out / rel
        return json.loads(p.read_text()) if p.exists() else None

    vocab_meta = read_json("vocab/u.json")
    repr_meta = read_json("repr/meta.json")
    selected = read_json("filter/selected.json")
    gain = read_json("eval/filter_gain.json")
    for name, value in (
        ("vocab/u.json", vocab_meta), ("repr/meta.json", repr_meta),
        ("filter/selected.json", selected), ("eval/filter_gain.json", gain),
    ):
        if value is None:
            raise ConfigError(f"missing stage artifact {name}; rerun that stage")

    config = read_json("config.json")
    if config is None:
        # stagewise flow: recover what the artifacts themselves record
        config = {"gamma": repr_meta["gamma"], "theta": vocab_meta.get("theta")}
        train_meta = read_json("train/meta.json")
        if train_meta is not None:
            config.update(train_meta)
    hyper = dict(config)
    hyper.pop("out_dir", None)  # where the report lives, not a hyperparameter
    hyper["k_tilde"] = vocab_meta["k_tilde"]
    hyper["tau_effective"] = selected["tau_effective"]
    checkpoints = {
        "kmeans_on_x": read_json("eval/metrics_kmeans_on_x.json"),
        "kmeans_on_c": read_json("eval/metrics_kmeans_on_c.json"),
        "final": read_json("eval/metrics_final.json"),
    }
    report = {
        "hyperparameters": hyper,
        "num_samples": repr_meta["n"],
        "num_candidates": repr_meta["m"],
        "checkpoints": checkpoints,
        "filter": gain,
        "nearest_nouns": read_json("eval/nearest_nouns.json"),
        "artifacts": {
            "candidates": "vocab/u.emb",
            "representation": "repr/c64.emb",
            "pseudo_labels": "cluster/pseudo.lab",
            "selected": "filter/selected.json",
            "centers": "train/centers64.emb",
            "loss_trace": "train/trace.csv",
            "final_labels": "assign/final.lab",
        },
    }
    heatmap_stats = read_json("eval/heatmap.png.stats.json")
    if heatmap_stats is not None:
        report["heatmap_stats"] = heatmap_stats
        report["artifacts"]["heatmap"] = "eval/heatmap.png"
    dump_json(report, out / "report.json")
    return report


# --- similarity diagnostics ---

def diagnose(
    x: EmbeddingMatrix, w: VocabSet, max_pairs: int = 200_000, seed: int = 0
) -> list[dict]:
    """Summary statistics of pairwise cosine similarities (image-image,
    noun-noun, image-noun), the numeric counterpart of joint-space analysis."""
    rng = np.random.default_rng(seed)
    xv = x.values.astype(np.float64, copy=False)
    wv = w.embeddings.values.astype(np.float64, copy=False)

    def unit(v):
        n = np.linalg.norm(v, axis=1)
        return v / np.where(n > 0, n, 1.0)[:, None]

    xu, wu = unit(xv), unit(wv)

    def sample_sims(a, b, same):
        na, nb = a.shape[0], b.shape[0]
        total = na * (na - 1) // 2 if same else na * nb
        k = min(max_pairs, total)
        i = rng.integers(0, na, size=k)
        j = rng.integers(0, nb, size=k)
        if same:
            mask = i != j
            i, j = i[mask], j[mask]
        return (a[i] * b[j]).sum(axis=1)

    rows = []
    for name, sims in (
        ("image-image", sample_sims(xu, xu, True)),
        ("noun-noun", sample_sims(wu, wu, True)),
        ("image-noun", sample_sims(xu, wu, False)),
    ):
        qs = np.quantile(sims, [0.05, 0.25, 0.5, 0.75, 0.95])
        rows.append(
            {
                "pairs": name,
                "count": int(sims.size),
                "mean": float(sims.mean()),
                "std": float(sims.std()),
                "min": float(sims.min()),
                "p05": float(qs[0]),
                "p25": float(qs[1]),
                "p50": float(qs[2]),
                "p75": float(qs[3]),
                "p95": float(qs[4]),
                "max": float(sims.max()),
            }
        )
    return rows


def write_diagnose_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)

"""Continuous semantic-center optimization under a three-term objective.

Each cluster k owns a unit-norm center vector s_k in embedding space.  The
assignment probability of a sample is a softmax over cos(x, s_k) / T.  The
training objective combines a generalized cross-entropy term on the
high-quality pseudo-labeled set (strong views), a strong/weak view
consistency term on the unlabeled set, and a negated global entropy term
encouraging diverse center usage:

    total = sup + lambda1 * con - lambda2 * ent

Gradients with respect to the center matrix are analytic, including the
chain through the cosine's dependence on the center norms, so they match
finite differences on raw entries.  Rows are re-projected to unit norm after
every SGD step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cluster import kmeans
from .embio import EmbeddingMatrix, LabelVector, ViewBundle
from .errors import (
    DivergenceDetected,
    EmptyBatch,
    InvariantViolation,
    MissingView,
    ZeroVector,
)

DEFAULT_TEMPERATURE = 0.01  # conventional learned temperature of VLM encoders


@dataclass(frozen=True)
class TrainConfig:
    q: float = 0.8
    lambda1: float = 2.0
    lambda2: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    lr0: float = 2e-3
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = 0
    enable_sup: bool = True
    enable_con: bool = True
    enable_ent: bool = True
    consistency_on: str = "softmax"  # or "logits", the view-gap literally on logits

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise InvariantViolation(f"q must lie in (0, 1], got {self.q}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvariantViolation("loss weights must be non-negative")
        if self.lr0 <= 0:
            raise InvariantViolation("initial learning rate must be positive")
        if self.consistency_on not in ("logits", "softmax"):
            raise InvariantViolation(
                f"consistency_on must be 'logits' or 'softmax', got {self.consistency_on!r}"
            )


@dataclass(frozen=True)
class SemanticCenters:
    s: np.ndarray  # K x d, unit-norm rows
    temperature: float = DEFAULT_TEMPERATURE
    step: int = 0

    def __post_init__(self):
        if self.s.ndim != 2:
            raise InvariantViolation("centers must be a K x d matrix")
        if self.temperature <= 0:
            raise InvariantViolation("temperature must be positive")
        norms = np.linalg.norm(self.s, axis=1)
        if np.any(norms == 0):
            raise ZeroVector("a center row has zero norm")
        self.s.setflags(write=False)

    @property
    def k(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class LossBreakdown:
    sup: float
    con: float
    ent: float
    total: float


@dataclass(frozen=True)
class TrainBatch:
    """One optimization step's samples: strong views for everyone, weak views
    for the unlabeled part; labels are -1 for unlabeled members."""

    strong: np.ndarray
    weak: np.ndarray
    labels: np.ndarray

    @property
    def labeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    @property
    def unlabeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels < 0)


def _row_norms(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ZeroVector(f"{what} row has zero norm")
    return norms


def _entropy(p: np.ndarray) -> float:
    safe = np.where(p > 0, p, 1.0)  # 0 log 0 := 0
    return float(-np.sum(p * np.log(safe)))


class _ViewEval:
    """Cosines / logits / probabilities of one view matrix against the centers,
    plus the chain rule back to the center matrix."""

    def __init__(self, x: np.ndarray, s: np.ndarray, temperature: float):
        self.x = x
        self.s = s
        self.t = temperature
        self.xnorm = _row_norms(x, "sample")
        self.snorm = _row_norms(s, "center")
        self.xhat = x / self.xnorm[:, None]
        self.cos = (self.xhat @ s.T) / self.snorm[None, :]
        self.logits = self.cos / temperature
        shifted = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        self.probs = e / e.sum(axis=1, keepdims=True)

    def chain(self, g_logits: np.ndarray) -> np.ndarray:
        """Map dL/dlogits (B x K) to dL/dS (K x d)."""
        term1 = (g_logits.T @ self.xhat) / self.snorm[:, None]
        term2 = ((g_logits * self.cos).sum(axis=0) / self.snorm**2)[:, None] * self.s
        return (term1 - term2) / self.t


def logit_vector(x: np.ndarray, centers: SemanticCenters) -> np.ndarray:
    """Raw prediction vector (cos(x, s_1)/T, ..., cos(x, s_K)/T)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    ev = _ViewEval(np.atleast_2d(x), centers.s, centers.temperature)
    return ev.logits[0] if single else ev.logits


def predict_probs(x: np.ndarray, centers: SemanticCenters) -> np.ndarray:
    """Softmax assignment probabilities over the K centers."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    ev = _ViewEval(np.atleast_2d(x), centers.s, centers.temperature)
    return ev.probs[0] if single else ev.probs


def assign(x_all: EmbeddingMatrix, centers: SemanticCenters) -> LabelVector:
    """Nearest-center assignment by cosine; ties go to the lowest index."""
    ev = _ViewEval(
        x_all.values.astype(np.float64, copy=False), centers.s, centers.temperature
    )
    return LabelVector(np.argmax(ev.cos, axis=1), num_classes=centers.k)


# --- individual loss terms (value-only entry points) ---

def loss_sup(
    strong: np.ndarray, labels: np.ndarray, centers: SemanticCenters, q: float
) -> float:
    """Generalized cross-entropy (1 - p^q)/q on labeled strong views."""
    strong = np.atleast_2d(np.asarray(strong, dtype=np.float64))
    labels = np.atleast_1d(labels)
    if strong.shape[0] == 0:
        raise EmptyBatch("supervised loss needs a non-empty batch")
    ev = _ViewEval(strong, centers.s, centers.temperature)
    p_y = ev.probs[np.arange(strong.shape[0]), labels]
    return float(((1.0 - p_y**q) / q).mean())


def loss_con(
    strong: np.ndarray,
    weak: np.ndarray,
    centers: SemanticCenters,
    consistency_on: str = "logits",
) -> float:
    """Squared prediction gap between the strong and weak view of each sample."""
    strong = np.atleast_2d(np.asarray(strong, dtype=np.float64))
    weak = np.atleast_2d(np.asarray(weak, dtype=np.float64))
    if strong.shape != weak.shape:
        raise MissingView(f"view shapes differ: {strong.shape} vs {weak.shape}")
    if strong.shape[0] == 0:
        return 0.0
    ev_s = _ViewEval(strong, centers.s, centers.temperature)
    ev_w = _ViewEval(weak, centers.s, centers.temperature)
    if consistency_on == "softmax":
        diff = ev_s.probs - ev_w.probs
    else:
        diff = ev_s.logits - ev_w.logits
    return float((diff * diff).sum(axis=1).mean())


def loss_ent(x: np.ndarray, centers: SemanticCenters) -> float:
    """Entropy of the batch-averaged assignment distribution (0 log 0 := 0)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise EmptyBatch("entropy term needs a non-empty batch")
    ev = _ViewEval(x, centers.s, centers.temperature)
    q_bar = ev.probs.mean(axis=0)
    return float(_entropy(q_bar))


# --- combined loss and analytic gradient ---

def total_loss_and_grad(
    batch: TrainBatch, centers: SemanticCenters, config: TrainConfig
) -> tuple[LossBreakdown, np.ndarray]:
    s = centers.s
    t = centers.temperature
    grad = np.zeros_like(s)

    strong = np.asarray(batch.strong, dtype=np.float64)
    ev_s = _ViewEval(strong, s, t)
    labeled = batch.labeled
    unlabeled = batch.unlabeled

    sup = 0.0
    if config.enable_sup and labeled.size:
        y = batch.labels[labeled]
        p = ev_s.probs[labeled]
        p_y = p[np.arange(labeled.size), y]
        sup = float(((1.0 - p_y**config.q) / config.q).mean())
        g = np.zeros_like(ev_s.probs)
        coeff = p_y**config.q / labeled.size
        g_lab = coeff[:, None] * p  # -p_y^q (delta - p_j) accumulated below
        g_lab[np.arange(labeled.size), y] -= coeff
        g[labeled] = g_lab
        grad += ev_s.chain(g)

    con = 0.0
    if config.enable_con and unlabeled.size:
        if batch.weak is None:
            raise MissingView("consistency loss enabled but no weak views supplied")
        weak_u = np.asarray(batch.weak, dtype=np.float64)[unlabeled]
        strong_u = strong[unlabeled]
        ev_su = _ViewEval(strong_u, s, t)
        ev_wu = _ViewEval(weak_u, s, t)
        b_u = unlabeled.size
        if config.consistency_on == "softmax":
            r = ev_su.probs - ev_wu.probs
            con = float((r * r).sum(axis=1).mean())
            rs = (r * ev_su.probs).sum(axis=1, keepdims=True)
            g_s = (2.0 / b_u) * ev_su.probs * (r - rs)
            rw = (r * ev_wu.probs).sum(axis=1, keepdims=True)
            g_w = -(2.0 / b_u) * ev_wu.probs * (r - rw)
        else:
            r = ev_su.logits - ev_wu.logits
            con = float((r * r).sum(axis=1).mean())
            g_s = (2.0 / b_u) * r
            g_w = -(2.0 / b_u) * r
        grad += config.lambda1 * (ev_su.chain(g_s) + ev_wu.chain(g_w))

    ent = 0.0
    if config.enable_ent:
        b = strong.shape[0]
        if b == 0:
            raise EmptyBatch("entropy term needs a non-empty batch")
        q_bar = ev_s.probs.mean(axis=0)
        ent = _entropy(q_bar)
        a = np.log(np.maximum(q_bar, np.finfo(np.float64).tiny)) + 1.0
        inner = ev_s.probs @ a
        g_ent = ev_s.probs * (inner[:, None] - a[None, :]) / b
        grad -= config.lambda2 * ev_s.chain(g_ent)

    total = sup + config.lambda1 * con - config.lambda2 * ent
    return LossBreakdown(sup=sup, con=con, ent=ent, total=total), grad


# --- center initialization and training ---

def random_unit_centers(k: int, d: int, seed: int) -> np.ndarray:
    """Seeded random unit vectors; the label-free initialization used when
    the supervised term is ablated."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((k, d))
    return v / np.linalg.norm(v, axis=1)[:, None]


def init_centers(
    x_base: EmbeddingMatrix,
    c: np.ndarray,
    labels: LabelVector,
    selected: np.ndarray,
    k: int,
    seed: int,
) -> np.ndarray:
    """Per-class mean of the high-quality samples' base features, unit-norm.

    A pseudo-class with no selected sample borrows the K-means-on-X center
    whose members' representation-space centroid is nearest to that class's
    representation-space centroid (each donor center is used at most once).
    """
    xv = x_base.values.astype(np.float64, copy=False)
    cv = np.asarray(c, dtype=np.float64)
    out = np.zeros((k, x_base.dim), dtype=np.float64)
    missing = []
    sel_labels = labels.values[selected]
    for cls in range(k):
        members = selected[sel_labels == cls]
        if members.size:
            out[cls] = xv[members].mean(axis=0)
        else:
            missing.append(cls)

    if missing:
        donor = kmeans(xv, k, seed=seed)
        donor_centroids = np.zeros((k, cv.shape[1]), dtype=np.float64)
        for j in range(k):
            donor_centroids[j] = cv[donor.labels.values == j].mean(axis=0)
        used: set[int] = set()
        for cls in missing:
            cls_members = np.flatnonzero(labels.values == cls)
            target = cv[cls_members].mean(axis=0) if cls_members.size else cv.mean(axis=0)
            dist = np.linalg.norm(donor_centroids - target[None, :], axis=1)
            order = np.argsort(dist, kind="stable")
            j = next((int(j) for j in order if int(j) not in used), int(order[0]))
            used.add(j)
            out[cls] = donor.centers[j]

    norms = np.linalg.norm(out, axis=1)
    rng = np.random.default_rng(seed)
    for cls in np.flatnonzero(norms < 1e-12):
        v = rng.standard_normal(x_base.dim)
        out[cls] = v / np.linalg.norm(v)
        norms[cls] = 1.0
    return out / np.linalg.norm(out, axis=1)[:, None]


def cosine_annealed_lr(lr0: float, step: int, total_steps: int) -> float:
    if total_steps < 1:
        return lr0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def train_centers(
    views: ViewBundle,
    dl_indices: np.ndarray,
    dl_labels: np.ndarray,
    du_indices: np.ndarray,
    config: TrainConfig,
    init: np.ndarray,
) -> tuple[SemanticCenters, list[tuple]]:
    """Mini-batch SGD over all samples with cosine-annealed step size.

    Labeled members of a batch feed the supervised term, unlabeled members
    the consistency term, and everyone the entropy term.  Center rows are
    re-normalized after each update.  Returns the final centers and a trace
    of (step, sup, con, ent, total, lr) rows.
    """
    if dl_indices.size == 0:
        raise EmptyBatch("high-quality set is empty; training is undefined")
    if config.enable_con:
        if views.n_strong < 1 or views.n_weak < 1:
            raise MissingView(
                "consistency loss needs at least one strong and one weak view block"
            )
    elif views.n_strong < 1:
        raise MissingView("training needs at least one strong view block")

    n = views.base.rows
    k = init.shape[0]
    y_full = np.full(n, -1, dtype=np.int64)
    y_full[dl_indices] = dl_labels

    strong_blocks = np.stack(
        [b.values.astype(np.float64, copy=False) for b in views.strong_views]
    )
    if views.n_weak:
        weak_blocks = np.stack(
            [b.values.astype(np.float64, copy=False) for b in views.weak_views]
        )
    else:
        weak_blocks = strong_blocks  # unused when the consistency term is off

    s = init.astype(np.float64).copy()
    centers = SemanticCenters(s.copy(), temperature=config.temperature, step=0)
    trace: list[tuple] = []
    if config.epochs == 0:
        return centers, trace

    rng = np.random.default_rng(config.seed)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    step = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            pick_s = rng.integers(0, strong_blocks.shape[0], size=idx.size)
            pick_w = rng.integers(0, weak_blocks.shape[0], size=idx.size)
            batch = TrainBatch(
                strong=strong_blocks[pick_s, idx],
                weak=weak_blocks[pick_w, idx],
                labels=y_full[idx],
            )
            lr = cosine_annealed_lr(config.lr0, step, total_steps)
            centers = SemanticCenters(s, temperature=config.temperature, step=step)
            breakdown, grad = total_loss_and_grad(batch, centers, config)
            if not math.isfinite(breakdown.total):
                raise DivergenceDetected(f"total loss is {breakdown.total} at step {step}")
            s = s - lr * grad
            norms = np.linalg.norm(s, axis=1)
            if np.any(norms == 0):
                raise DivergenceDetected(f"a center collapsed to zero at step {step}")
            s = s / norms[:, None]
            trace.append(
                (step, breakdown.sup, breakdown.con, breakdown.ent, breakdown.total, lr)
            )
            step += 1
    return SemanticCenters(s, temperature=config.temperature, step=step), trace

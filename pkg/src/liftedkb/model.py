"""Parameter storage, scoring, and loss/gradient math for variants F, FS, FSL.

Variant F scores a relation against the raw tuple vector; FS and FSL map
the tuple pre-activation through a component-wise sigmoid first, so the
effective tuple embedding always lies in (0,1)^k. FSL additionally adds,
for every implication rule, a per-dimension hinge between the two relation
vectors (the lifted rule loss), weighted by beta_tilde.

All parameters and losses are double precision; the finite-difference
gradient checks in the test suite rely on that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as sigmoid

from .data import Rule
from .errors import ParseError

VARIANTS = ("f", "fs", "fsl")


@dataclass
class ModelConfig:
    k: int = 100
    alpha: float = 0.01
    beta_tilde: float = 0.1
    delta: float = 0.01
    variant: str = "fs"
    init_low: float = -0.1
    init_high: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.alpha < 0 or self.beta_tilde < 0 or self.delta < 0:
            raise ValueError("alpha, beta_tilde, delta must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.init_low < self.init_high:
            raise ValueError("init_low must be < init_high")

    @property
    def sigmoid_tuples(self) -> bool:
        return self.variant in ("fs", "fsl")


@dataclass
class ModelParams:
    """Dense relation matrix and tuple pre-activation matrix, k columns each."""
    relations: np.ndarray   # (n_relations, k)
    tuple_pre: np.ndarray   # (n_tuples, k)

    def copy(self) -> "ModelParams":
        return ModelParams(self.relations.copy(), self.tuple_pre.copy())


@dataclass
class LossBreakdown:
    reconstruction: float
    l2: float
    implication: float
    total: float

    @classmethod
    def build(cls, reconstruction, l2, implication, alpha, beta_tilde):
        total = reconstruction + alpha * l2 + beta_tilde * implication
        return cls(reconstruction, l2, implication, total)


def effective_tuples(params: ModelParams, variant: str, rows=None) -> np.ndarray:
    """Effective tuple embeddings: raw pre-activations (F) or their sigmoid (FS/FSL)."""
    pre = params.tuple_pre if rows is None else params.tuple_pre[rows]
    if variant == "f":
        return pre
    return sigmoid(pre)


def tuple_embedding(params: ModelParams, tup: int, variant: str) -> np.ndarray:
    if variant == "f":
        return params.tuple_pre[tup]
    return sigmoid(params.tuple_pre[tup])


def score(params: ModelParams, relation: int, tup: int, variant: str) -> float:
    return float(params.relations[relation] @ tuple_embedding(params, tup, variant))


def recon_pair_loss(s):
    """Ranking loss for one (negative, positive) pair: softplus(s), s = r.(t_neg - t_pos).

    Softplus is the numerically stable form of -log(sigmoid(-s)); the naive
    formula overflows for large |s|.
    """
    return np.logaddexp(0.0, s)


def implication_pair_loss(s, delta):
    """Margin hinge max(0, s + delta); exactly 0 once s <= -delta."""
    return np.maximum(0.0, s + delta)


def lifted_rule_loss(params: ModelParams, rule: Rule, delta: float) -> float:
    """Tuple-independent rule loss: hinge summed over dimensions.

    sum_i max(0, r_ant[i] - r_cons[i] + delta). Zero exactly when the
    antecedent vector sits at least delta below the consequent everywhere,
    which makes the implication hold for every non-negative tuple.
    """
    diff = params.relations[rule.antecedent] - params.relations[rule.consequent]
    return float(np.maximum(0.0, diff + delta).sum())


def grounded_rule_loss(params: ModelParams, rule: Rule, tuples, delta: float,
                       variant: str) -> float:
    """Rule loss grounded over explicit tuples (verification oracle only).

    Sums the hinge on the L1-normalized effective embedding of each tuple.
    By convexity this is bounded above by len(tuples) * lifted_rule_loss.
    Never used in training.
    """
    diff = params.relations[rule.antecedent] - params.relations[rule.consequent]
    total = 0.0
    for tup in tuples:
        emb = tuple_embedding(params, tup, variant)
        if variant == "f" and np.any(emb < 0):
            raise ValueError(f"tuple {tup} has negative components; the Jensen "
                             "bound requires a non-negative embedding space")
        norm = emb.sum()
        if norm <= 0:
            raise ValueError(f"tuple {tup} has zero L1 norm")
        total += float(implication_pair_loss(diff @ (emb / norm), delta))
    return total


@dataclass
class Batch:
    """A minibatch of BPR pairs: (relation, positive tuple, negative tuple)."""
    relations: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self) -> int:
        return len(self.relations)

    @classmethod
    def from_pairs(cls, triples) -> "Batch":
        arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])


@dataclass
class Gradients:
    """Dense gradient buffers plus the touched-row index sets (lazy updates)."""
    relations: np.ndarray
    tuple_pre: np.ndarray
    relation_rows: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    tuple_rows: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))


def touched_rows(batch: Batch, rules) -> tuple[np.ndarray, np.ndarray]:
    rel = batch.relations
    if rules:
        rule_rel = np.array([i for r in rules for i in (r.antecedent, r.consequent)],
                            dtype=np.int64)
        rel = np.concatenate([rel, rule_rel])
    tup = np.concatenate([batch.positives, batch.negatives])
    return np.unique(rel), np.unique(tup)


def batch_loss(params: ModelParams, batch: Batch, rules, config: ModelConfig) -> LossBreakdown:
    """Total loss for one batch: BPR reconstruction + L2 + lifted rule losses.

    The L2 term covers the parameter rows touched by this batch (including
    rule relations), each counted once; this is the sparse-training reading
    of the global regularizer and is exactly what `gradients` differentiates.
    """
    t_pos = effective_tuples(params, config.variant, batch.positives)
    t_neg = effective_tuples(params, config.variant, batch.negatives)
    r = params.relations[batch.relations]
    s = np.einsum("ij,ij->i", r, t_neg - t_pos)
    recon = float(recon_pair_loss(s).sum())

    rel_rows, tup_rows = touched_rows(batch, rules)
    l2 = float(np.sum(params.relations[rel_rows] ** 2)
               + np.sum(params.tuple_pre[tup_rows] ** 2))

    implication = 0.0
    if rules:
        for rule in rules:
            implication += lifted_rule_loss(params, rule, config.delta)
    return LossBreakdown.build(recon, l2, implication, config.alpha, config.beta_tilde)


def recon_l2_gradients(params: ModelParams, batch: Batch, rules,
                       config: ModelConfig) -> tuple[Gradients, float, float]:
    """Gradients of the reconstruction + L2 terms; returns (grads, recon, l2)."""
    grads = Gradients(np.zeros_like(params.relations), np.zeros_like(params.tuple_pre))
    t_pos = effective_tuples(params, config.variant, batch.positives)
    t_neg = effective_tuples(params, config.variant, batch.negatives)
    r = params.relations[batch.relations]
    s = np.einsum("ij,ij->i", r, t_neg - t_pos)
    recon = float(recon_pair_loss(s).sum())
    w = sigmoid(s)[:, None]  # d softplus(s) / ds

    np.add.at(grads.relations, batch.relations, w * (t_neg - t_pos))
    if config.sigmoid_tuples:
        np.add.at(grads.tuple_pre, batch.negatives, w * r * t_neg * (1.0 - t_neg))
        np.add.at(grads.tuple_pre, batch.positives, -w * r * t_pos * (1.0 - t_pos))
    else:
        np.add.at(grads.tuple_pre, batch.negatives, w * r)
        np.add.at(grads.tuple_pre, batch.positives, -w * r)

    rel_rows, tup_rows = touched_rows(batch, rules)
    grads.relations[rel_rows] += 2.0 * config.alpha * params.relations[rel_rows]
    grads.tuple_pre[tup_rows] += 2.0 * config.alpha * params.tuple_pre[tup_rows]
    grads.relation_rows, grads.tuple_rows = rel_rows, tup_rows
    l2 = float(np.sum(params.relations[rel_rows] ** 2)
               + np.sum(params.tuple_pre[tup_rows] ** 2))
    return grads, recon, l2


def rule_gradients(params: ModelParams, rule_idx, config: ModelConfig,
                   grads: Gradients) -> float:
    """Add beta_tilde-weighted lifted-rule gradients in place; returns the raw loss.

    The hinge subgradient at the kink is 0 (constraint already satisfied).
    `rule_idx` is a pair of index arrays (antecedents, consequents).
    """
    ant, cons = rule_idx
    if len(ant) == 0:
        return 0.0
    diff = params.relations[ant] - params.relations[cons] + config.delta
    active = diff > 0.0
    loss = float(np.where(active, diff, 0.0).sum())
    contrib = config.beta_tilde * active.astype(np.float64)
    np.add.at(grads.relations, ant, contrib)
    np.add.at(grads.relations, cons, -contrib)
    return loss


def rule_index_arrays(rules) -> tuple[np.ndarray, np.ndarray]:
    ant = np.array([r.antecedent for r in rules], dtype=np.int64)
    cons = np.array([r.consequent for r in rules], dtype=np.int64)
    return ant, cons


def gradients(params: ModelParams, batch: Batch, rules, config: ModelConfig) -> Gradients:
    """Exact analytic gradients of `batch_loss` w.r.t. all parameters."""
    grads, _, _ = recon_l2_gradients(params, batch, rules, config)
    if rules:
        rule_gradients(params, rule_index_arrays(rules), config, grads)
    return grads


def init_params(config: ModelConfig, n_relations: int, n_tuples: int, seed: int,
                overrides=None) -> ModelParams:
    """Uniform initialization with optional per-relation range overrides.

    `overrides` maps relation id -> (low, high); used by the zero-shot
    protocol to start implied relations deep in negative territory.
    Deterministic for a fixed seed, including overrides.
    """
    rng = np.random.default_rng(seed)
    relations = rng.uniform(config.init_low, config.init_high, size=(n_relations, config.k))
    tuple_pre = rng.uniform(config.init_low, config.init_high, size=(n_tuples, config.k))
    if overrides:
        for rid in sorted(overrides):
            low, high = overrides[rid]
            if not low < high:
                raise ValueError(f"invalid override range ({low}, {high}) for relation {rid}")
            relations[rid] = rng.uniform(low, high, size=config.k)
    return ModelParams(relations, tuple_pre)


def _format_row(vec) -> str:
    return " ".join(format(v, ".17g") for v in vec)


def save_embeddings(path, params: ModelParams, relation_names, tuple_names) -> None:
    """Text persistence: `k <dim>` header, `R <name> <reals>` / `E <name> <reals>` lines.

    Tuple lines store pre-activations. 17 significant digits make the
    round trip bit-exact for float64. Names must not contain whitespace.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"k {params.relations.shape[1]}\n")
        for name, row in zip(relation_names, params.relations):
            fh.write(f"R {name} {_format_row(row)}\n")
        for name, row in zip(tuple_names, params.tuple_pre):
            fh.write(f"E {name} {_format_row(row)}\n")


def load_embeddings(path):
    """Inverse of save_embeddings; returns (params, relation_names, tuple_names)."""
    relations, rel_names = [], []
    tuples, tup_names = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "k":
            raise ParseError(f"{path}: expected `k <dim>` header")
        k = int(header[1])
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != k + 2 or parts[0] not in ("R", "E"):
                raise ParseError(f"{path}:{lineno}: malformed embedding line")
            vec = np.array([float(v) for v in parts[2:]])
            if parts[0] == "R":
                rel_names.append(parts[1])
                relations.append(vec)
            else:
                tup_names.append(parts[1])
                tuples.append(vec)
    if not relations or not tuples:
        raise ParseError(f"{path}: checkpoint has no relations or no tuples")
    params = ModelParams(np.vstack(relations), np.vstack(tuples))
    return params, rel_names, tup_names

"""Graph similarity via a relational graph convolutional network.

Online propagation graphs and knowledge-graph subgraphs are unified at the
type level, featurized with the shared embedding table, and pushed through
two relational GCN layers (one weight matrix per relation plus a self-loop
transform, mean-normalized neighbor aggregation, rectifier activation).
Column-wise max pooling yields one vector per graph; the two vectors are
concatenated and scored by a two-layer perceptron whose softmax gives
(p_dissimilar, p_similar). Forward and backward passes are hand-derived
numpy; no autograd.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import EmbeddingTable
from .errors import ChecksumMismatch, DegenerateData, EmptyKnowledgeBase, ShapeMismatch
from .fekg import AbstractFpg, abstract
from .fpg import Fpg
from .relations import RelationKind

logger = logging.getLogger(__name__)

RELATIONS = ("sequential", "sequential_inv", "causal", "causal_inv")
_INVERSE = {
    "sequential": "sequential_inv",
    "causal": "causal_inv",
}


@dataclass
class MultiGraph:
    """Directed labeled multigraph ready for the network.

    edges maps each relation to (src, dst) index pairs; every canonical edge
    must have its inverse twin and vice versa.
    """

    features: np.ndarray  # (V, d_in)
    edges: dict[str, list[tuple[int, int]]]
    node_ids: list[str] = field(default_factory=list)
    _norm_adj: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        for r in RELATIONS:
            self.edges.setdefault(r, [])
        n = self.n_nodes
        for r, pairs in self.edges.items():
            if r not in RELATIONS:
                raise ShapeMismatch(f"unknown relation {r!r}")
            for u, v in pairs:
                if not (0 <= u < n and 0 <= v < n):
                    raise ShapeMismatch(f"edge ({u}, {v}) out of range for {n} nodes")
        for canon, inv in _INVERSE.items():
            twins = {(v, u) for u, v in self.edges[canon]}
            if twins != set(self.edges[inv]):
                raise ShapeMismatch(f"{inv} edges are not the twins of {canon}")

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    def norm_adj(self, relation: str) -> np.ndarray:
        """Dense (V, V) matrix: row v holds 1/|in-neighbors of v| per edge u->v."""
        if relation not in self._norm_adj:
            n = self.n_nodes
            a = np.zeros((n, n))
            for u, v in self.edges[relation]:
                a[v, u] += 1.0
            deg = a.sum(axis=1, keepdims=True)
            np.divide(a, deg, out=a, where=deg > 0)
            self._norm_adj[relation] = a
        return self._norm_adj[relation]

    def permuted(self, perm: list[int]) -> "MultiGraph":
        """Same graph with node order permuted (perm[new] = old)."""
        inverse = {old: new for new, old in enumerate(perm)}
        return MultiGraph(
            features=self.features[perm],
            edges={r: [(inverse[u], inverse[v]) for u, v in pairs]
                   for r, pairs in self.edges.items()},
            node_ids=[self.node_ids[i] for i in perm] if self.node_ids else [],
        )


def to_multigraph(
    g: Fpg | AbstractFpg, table: EmbeddingTable, window_cap: int = 100
) -> MultiGraph:
    """Abstract (if concrete), cap node count, featurize, add inverse twins.

    Over-cap concrete graphs keep their most recently seen types; over-cap
    abstract graphs keep their highest-degree types.
    """
    if isinstance(g, Fpg):
        ag = abstract(g)
        recency = {}
        for e in g.nodes.values():
            recency[e.event_type] = max(recency.get(e.event_type, -1), e.timestamp)
        rank = sorted(ag.nodes, key=lambda t: (-recency[t], t))
    else:
        ag = g
        degree = {t: 0 for t in ag.nodes}
        for s, _, d in ag.edges:
            degree[s] += 1
            degree[d] += 1
        rank = sorted(ag.nodes, key=lambda t: (-degree[t], t))
    kept = set(rank[:window_cap])
    node_ids = sorted(kept)
    index = {t: i for i, t in enumerate(node_ids)}
    features = (np.stack([table.vector(t) for t in node_ids])
                if node_ids else np.zeros((0, table.dim)))
    edges: dict[str, list[tuple[int, int]]] = {r: [] for r in RELATIONS}
    for s, kind, d in sorted(ag.edges, key=lambda e: (e[0], e[1].value, e[2])):
        if s not in kept or d not in kept:
            continue
        u, v = index[s], index[d]
        name = "causal" if kind is RelationKind.CAUSAL else "sequential"
        edges[name].append((u, v))
        edges[name + "_inv"].append((v, u))
    return MultiGraph(features=features, edges=edges, node_ids=node_ids)


@dataclass
class RgcnLayer:
    w_self: np.ndarray  # (d_in, d_out)
    w_rel: dict[str, np.ndarray]  # relation -> (d_in, d_out)


@dataclass
class RgcnSimilarityModel:
    layers: list[RgcnLayer]
    w0: np.ndarray  # (2*d_lo, h)
    b0: np.ndarray  # (h,)
    w1: np.ndarray  # (h, 2)
    b1: np.ndarray  # (2,)
    embedding_checksum: str | None = None

    @property
    def d_in(self) -> int:
        return self.layers[0].w_self.shape[0]

    @property
    def d_lo(self) -> int:
        return self.layers[-1].w_self.shape[1]

    def validate(self) -> None:
        d = self.d_in
        for layer in self.layers:
            if layer.w_self.shape[0] != d:
                raise ShapeMismatch("layer input dim mismatch")
            for r in RELATIONS:
                if layer.w_rel[r].shape != layer.w_self.shape:
                    raise ShapeMismatch(f"relation weight shape mismatch for {r!r}")
            d = layer.w_self.shape[1]
        if self.w0.shape[0] != 2 * d or self.w0.shape[1] != self.b0.shape[0]:
            raise ShapeMismatch("mlp first layer shape mismatch")
        if self.w1.shape != (self.b0.shape[0], 2) or self.b1.shape != (2,):
            raise ShapeMismatch("mlp head must end in dimension 2")

    def to_json_dict(self) -> dict:
        return {
            "activation": "relu",
            "relations": list(RELATIONS),
            "layers": [
                {
                    "w_self": layer.w_self.tolist(),
                    "w_rel": {r: layer.w_rel[r].tolist() for r in RELATIONS},
                }
                for layer in self.layers
            ],
            "mlp": {"w0": self.w0.tolist(), "b0": self.b0.tolist(),
                    "w1": self.w1.tolist(), "b1": self.b1.tolist()},
            "embedding_checksum": self.embedding_checksum,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RgcnSimilarityModel":
        model = cls(
            layers=[
                RgcnLayer(
                    w_self=np.array(l["w_self"], dtype=np.float64),
                    w_rel={r: np.array(l["w_rel"][r], dtype=np.float64)
                           for r in RELATIONS},
                )
                for l in doc["layers"]
            ],
            w0=np.array(doc["mlp"]["w0"], dtype=np.float64),
            b0=np.array(doc["mlp"]["b0"], dtype=np.float64),
            w1=np.array(doc["mlp"]["w1"], dtype=np.float64),
            b1=np.array(doc["mlp"]["b1"], dtype=np.float64),
            embedding_checksum=doc.get("embedding_checksum"),
        )
        model.validate()
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path,
             table: EmbeddingTable | None = None) -> "RgcnSimilarityModel":
        model = cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        if table is not None and model.embedding_checksum is not None:
            if table.checksum() != model.embedding_checksum:
                raise ChecksumMismatch(
                    "embedding table does not match the one the model was trained with")
        return model


@dataclass
class SimilarityPrediction:
    probs: np.ndarray  # (dissimilar, similar)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (2,):
            raise ShapeMismatch("prediction must have exactly 2 components")
        if np.any(self.probs < 0) or abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("probabilities must be >= 0 and sum to 1")

    @property
    def p_similar(self) -> float:
        return float(self.probs[1])

    @property
    def p_dissimilar(self) -> float:
        return float(self.probs[0])


def init_similarity_model(
    d_in: int = 32, d_hidden: int = 32, d_lo: int = 32, mlp_hidden: int = 64,
    seed: int = 0, embedding_checksum: str | None = None,
) -> RgcnSimilarityModel:
    """Structured initialization biased toward feature-containment scoring.

    Square convolution layers start near the identity (presence information
    survives the first forward passes); the head starts as a signed
    per-dimension comparison of the two readouts, with "knowledge graph
    exceeds online graph" units wired toward the dissimilar logit. Training
    reshapes everything, but the rectified head would die globally if both
    logits ever went negative for every pair, so it must start both inside
    the active region and near a sensible decision rule.
    """
    rng = np.random.default_rng(seed)

    def glorot(shape, scale=1.0):
        a = scale * np.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-a, a, size=shape)

    dims = [(d_in, d_hidden), (d_hidden, d_lo)]
    layers = []
    for shape in dims:
        w_self = glorot(shape, scale=0.15)
        if shape[0] == shape[1]:
            w_self += 0.85 * np.eye(shape[0])
        layers.append(RgcnLayer(
            w_self=w_self, w_rel={r: glorot(shape, scale=0.15) for r in RELATIONS}))

    w0 = glorot((2 * d_lo, mlp_hidden), scale=0.1)
    half = mlp_hidden // 2
    paired = min(d_lo, half)
    for k in range(paired):
        # unit k: (g_kg - g_online)+ , unit half+k: (g_online - g_kg)+
        w0[d_lo + k, k] += 1.0
        w0[k, k] -= 1.0
        w0[k, half + k] += 1.0
        w0[d_lo + k, half + k] -= 1.0
    b0 = np.full(mlp_hidden, 0.02)
    w1 = glorot((mlp_hidden, 2), scale=0.1)
    w1[:paired, 0] += 1.0
    w1[:paired, 1] -= 1.0
    w1[half:half + paired, 0] += 0.3
    w1[half:half + paired, 1] -= 0.3
    model = RgcnSimilarityModel(
        layers=layers,
        w0=w0,
        b0=b0,
        w1=w1,
        b1=np.array([0.2, 1.3]),
        embedding_checksum=embedding_checksum,
    )
    model.validate()
    return model


def _forward_graph(g: MultiGraph, model: RgcnSimilarityModel):
    """All layer activations; returns (h_list, s_list) with h_list[0]=input."""
    if g.features.shape[1] != model.d_in:
        raise ShapeMismatch(
            f"graph feature dim {g.features.shape[1]} != model d_in {model.d_in}")
    h_list = [g.features]
    s_list = []
    h = g.features
    for layer in model.layers:
        s = h @ layer.w_self
        for r in RELATIONS:
            if g.edges[r]:
                s = s + g.norm_adj(r) @ h @ layer.w_rel[r]
        h = np.maximum(s, 0.0)
        s_list.append(s)
        h_list.append(h)
    return h_list, s_list


def rgcn_forward(g: MultiGraph, model: RgcnSimilarityModel) -> np.ndarray:
    """Node representations after all relational convolution layers: (V, d_lo)."""
    h_list, _ = _forward_graph(g, model)
    return h_list[-1]


def graph_readout(h: np.ndarray) -> np.ndarray:
    """Column-wise max; a zero-node graph reads out as the zero vector."""
    if h.shape[0] == 0:
        return np.zeros(h.shape[1])
    return h.max(axis=0)


def _mlp_forward(g_online: np.ndarray, g_kg: np.ndarray, model: RgcnSimilarityModel):
    z = np.concatenate([g_online, g_kg])
    a0 = z @ model.w0 + model.b0
    v = np.maximum(a0, 0.0)
    a1 = v @ model.w1 + model.b1
    u = np.maximum(a1, 0.0)
    shifted = u - u.max()
    e = np.exp(shifted)
    probs = e / e.sum()
    return z, a0, v, a1, u, probs


def similarity(
    online: MultiGraph, kg: MultiGraph, model: RgcnSimilarityModel
) -> SimilarityPrediction:
    """softmax(relu(W1 relu(W0 (g_online ++ g_kg) + b0) + b1)); order matters."""
    g_on = graph_readout(rgcn_forward(online, model))
    g_kg = graph_readout(rgcn_forward(kg, model))
    *_, probs = _mlp_forward(g_on, g_kg, model)
    return SimilarityPrediction(probs=probs)


def match(
    online: MultiGraph,
    kgs: list[tuple[str, MultiGraph]],
    model: RgcnSimilarityModel,
) -> list[tuple[str, float]]:
    """All knowledge-graph classes ranked by similar-probability, descending.

    Classes appearing with several subgraphs score as the max over them;
    ties rank in ascending class order.
    """
    if not kgs:
        raise EmptyKnowledgeBase("no knowledge graphs to match against")
    best: dict[str, float] = {}
    for fault_class, kg in kgs:
        p = similarity(online, kg, model).p_similar
        if fault_class not in best or p > best[fault_class]:
            best[fault_class] = p
    return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))


def similarity_from_readouts(
    g_online: np.ndarray, g_kg: np.ndarray, model: RgcnSimilarityModel
) -> SimilarityPrediction:
    """similarity() on precomputed graph readouts (model head only)."""
    *_, probs = _mlp_forward(g_online, g_kg, model)
    return SimilarityPrediction(probs=probs)


class KnowledgeBaseMatcher:
    """match() against a fixed knowledge base with its readouts precomputed.

    Equivalent ranking to match(); the per-entry graph convolutions run once
    at construction instead of once per query.
    """

    def __init__(self, kgs: list[tuple[str, MultiGraph]], model: RgcnSimilarityModel):
        if not kgs:
            raise EmptyKnowledgeBase("no knowledge graphs to match against")
        self.model = model
        self.entries = [(fault_class, graph_readout(rgcn_forward(kg, model)))
                        for fault_class, kg in kgs]

    def rank(self, online: MultiGraph) -> list[tuple[str, float]]:
        g_on = graph_readout(rgcn_forward(online, self.model))
        best: dict[str, float] = {}
        for fault_class, g_kg in self.entries:
            p = similarity_from_readouts(g_on, g_kg, self.model).p_similar
            if fault_class not in best or p > best[fault_class]:
                best[fault_class] = p
        return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))


def _zero_grads(model: RgcnSimilarityModel) -> dict:
    return {
        "layers": [
            {"w_self": np.zeros_like(layer.w_self),
             "w_rel": {r: np.zeros_like(layer.w_rel[r]) for r in RELATIONS}}
            for layer in model.layers
        ],
        "w0": np.zeros_like(model.w0),
        "b0": np.zeros_like(model.b0),
        "w1": np.zeros_like(model.w1),
        "b1": np.zeros_like(model.b1),
    }


def _backward_graph(
    g: MultiGraph, model: RgcnSimilarityModel, h_list, s_list,
    d_h_final: np.ndarray, grads: dict,
) -> None:
    """Accumulate layer-weight gradients given dLoss/d(final node matrix)."""
    d_h = d_h_final
    for l in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[l]
        d_s = d_h * (s_list[l] > 0.0)
        h_prev = h_list[l]
        grads["layers"][l]["w_self"] += h_prev.T @ d_s
        d_h = d_s @ layer.w_self.T
        for r in RELATIONS:
            if not g.edges[r]:
                continue
            a = g.norm_adj(r)
            grads["layers"][l]["w_rel"][r] += (a @ h_prev).T @ d_s
            d_h = d_h + a.T @ (d_s @ layer.w_rel[r].T)


def pair_loss_and_gradients(
    online: MultiGraph, kg: MultiGraph, label: int, model: RgcnSimilarityModel
) -> tuple[float, dict]:
    """Cross-entropy of one labeled pair (label 1 = similar) and d/d(params)."""
    h_on, s_on = _forward_graph(online, model)
    h_kg, s_kg = _forward_graph(kg, model)
    g_on = graph_readout(h_on[-1])
    g_kg = graph_readout(h_kg[-1])
    z, a0, v, a1, u, probs = _mlp_forward(g_on, g_kg, model)
    loss = -float(np.log(max(float(probs[label]), 1e-300)))

    grads = _zero_grads(model)
    d_u = probs.copy()
    d_u[label] -= 1.0
    d_a1 = d_u * (a1 > 0.0)
    grads["w1"] += np.outer(v, d_a1)
    grads["b1"] += d_a1
    d_v = model.w1 @ d_a1
    d_a0 = d_v * (a0 > 0.0)
    grads["w0"] += np.outer(z, d_a0)
    grads["b0"] += d_a0
    d_z = model.w0 @ d_a0
    d_lo = model.d_lo

    for (h_list, s_list, graph, d_g) in (
        (h_on, s_on, online, d_z[:d_lo]),
        (h_kg, s_kg, kg, d_z[d_lo:]),
    ):
        h_final = h_list[-1]
        if h_final.shape[0] == 0:
            continue
        d_h_final = np.zeros_like(h_final)
        rows = np.argmax(h_final, axis=0)
        d_h_final[rows, np.arange(h_final.shape[1])] = d_g
        _backward_graph(graph, model, h_list, s_list, d_h_final, grads)
    return loss, grads


def pair_loss(
    online: MultiGraph, kg: MultiGraph, label: int, model: RgcnSimilarityModel
) -> float:
    p = similarity(online, kg, model).probs
    return -float(np.log(max(float(p[label]), 1e-300)))


@dataclass
class TrainConfig:
    lr: float = 0.02
    epochs: int = 200
    seed: int = 0
    neg_ratio: int = 3
    tol: float = 0.02  # stop when mean epoch loss drops below
    check_every: int = 10  # validation cadence (epochs)
    patience: int = 8  # validation checks without improvement before stopping

    def __post_init__(self):
        if self.epochs < 1 or self.lr <= 0 or self.neg_ratio < 1:
            raise ValueError("bad training config")
        if self.check_every < 1 or self.patience < 1:
            raise ValueError("bad validation schedule")


def _snapshot(model: RgcnSimilarityModel) -> dict:
    return {
        "layers": [
            {"w_self": layer.w_self.copy(),
             "w_rel": {r: layer.w_rel[r].copy() for r in RELATIONS}}
            for layer in model.layers
        ],
        "w0": model.w0.copy(), "b0": model.b0.copy(),
        "w1": model.w1.copy(), "b1": model.b1.copy(),
    }


def _restore(model: RgcnSimilarityModel, snap: dict) -> None:
    for layer, saved in zip(model.layers, snap["layers"]):
        layer.w_self[...] = saved["w_self"]
        for r in RELATIONS:
            layer.w_rel[r][...] = saved["w_rel"][r]
    model.w0[...] = snap["w0"]
    model.b0[...] = snap["b0"]
    model.w1[...] = snap["w1"]
    model.b1[...] = snap["b1"]


def train_similarity(
    pairs: list[tuple[MultiGraph, MultiGraph, int]],
    cfg: TrainConfig,
    model: RgcnSimilarityModel | None = None,
    validation=None,
) -> RgcnSimilarityModel:
    """Full-batch Adam on the pair cross-entropy; deterministic per seed.

    Distinct graph objects are forwarded once per epoch and their readout
    gradients summed over the pairs touching them, which is exactly the
    batch gradient. Stops early once the mean loss clears cfg.tol; when a
    validation scorer (model -> float, higher better) is given, the model is
    checked every cfg.check_every epochs, training stops after cfg.patience
    checks without strict improvement, and the best-scoring state is
    returned.
    """
    if not pairs:
        raise DegenerateData("no training pairs")
    labels = {label for _, _, label in pairs}
    if labels != {0, 1}:
        raise DegenerateData(
            f"need both similar and dissimilar pairs, got labels {sorted(labels)}")
    d_in = pairs[0][0].features.shape[1]
    model = model or init_similarity_model(d_in=d_in, seed=cfg.seed)

    registry: list[MultiGraph] = []
    by_id: dict[int, int] = {}

    def register(g: MultiGraph) -> int:
        if id(g) not in by_id:
            by_id[id(g)] = len(registry)
            registry.append(g)
        return by_id[id(g)]

    indexed = [(register(on), register(kg), label) for on, kg, label in pairs]

    adam_m = _zero_grads(model)
    adam_v = _zero_grads(model)
    step = 0

    def params_and_grads(grads):
        yield model.w0, grads["w0"], adam_m["w0"], adam_v["w0"]
        yield model.b0, grads["b0"], adam_m["b0"], adam_v["b0"]
        yield model.w1, grads["w1"], adam_m["w1"], adam_v["w1"]
        yield model.b1, grads["b1"], adam_m["b1"], adam_v["b1"]
        for l, layer in enumerate(model.layers):
            yield (layer.w_self, grads["layers"][l]["w_self"],
                   adam_m["layers"][l]["w_self"], adam_v["layers"][l]["w_self"])
            for r in RELATIONS:
                yield (layer.w_rel[r], grads["layers"][l]["w_rel"][r],
                       adam_m["layers"][l]["w_rel"][r], adam_v["layers"][l]["w_rel"][r])

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best_score = None
    best_state = None
    stale_checks = 0
    for epoch in range(cfg.epochs):
        forwards = [_forward_graph(g, model) for g in registry]
        readouts = [graph_readout(h[-1]) for h, _ in forwards]
        grads = _zero_grads(model)
        d_readout = [np.zeros(model.d_lo) for _ in registry]
        total = 0.0
        for i_on, i_kg, label in indexed:
            z, a0, v, a1, u, probs = _mlp_forward(readouts[i_on], readouts[i_kg], model)
            total += -float(np.log(max(float(probs[label]), 1e-300)))
            d_u = probs.copy()
            d_u[label] -= 1.0
            d_a1 = d_u * (a1 > 0.0)
            grads["w1"] += np.outer(v, d_a1)
            grads["b1"] += d_a1
            d_a0 = (model.w1 @ d_a1) * (a0 > 0.0)
            grads["w0"] += np.outer(z, d_a0)
            grads["b0"] += d_a0
            d_z = model.w0 @ d_a0
            d_readout[i_on] += d_z[: model.d_lo]
            d_readout[i_kg] += d_z[model.d_lo:]
        for gi, graph in enumerate(registry):
            h_list, s_list = forwards[gi]
            h_final = h_list[-1]
            if h_final.shape[0] == 0 or not np.any(d_readout[gi]):
                continue
            d_h_final = np.zeros_like(h_final)
            rows = np.argmax(h_final, axis=0)
            d_h_final[rows, np.arange(h_final.shape[1])] = d_readout[gi]
            _backward_graph(graph, model, h_list, s_list, d_h_final, grads)

        step += 1
        scale = 1.0 / len(indexed)
        for param, grad, m, v_ in params_and_grads(grads):
            g = grad * scale
            m *= beta1
            m += (1 - beta1) * g
            v_ *= beta2
            v_ += (1 - beta2) * g * g
            m_hat = m / (1 - beta1 ** step)
            v_hat = v_ / (1 - beta2 ** step)
            param -= cfg.lr * m_hat / (np.sqrt(v_hat) + eps)

        if total / len(indexed) < cfg.tol:
            break
    return model

"""Single-hidden-layer network representation, inference and JSON persistence."""

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import NormStats

SCHEMA_VERSION = "1"


class ModelError(ValueError):
    pass


class ActivationKind(enum.Enum):
    SIGMOID = "sigmoid"


def activate(kind, z):
    """Apply the activation elementwise; ``z`` may be a scalar or array."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("activation input is not finite")
    if kind is ActivationKind.SIGMOID:
        out = expit(z)
    else:
        raise ValueError(f"unsupported activation {kind!r}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HiddenNode:
    w: np.ndarray
    b: float

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(w)) and math.isfinite(self.b)):
            raise ValueError("hidden node parameters must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def d(self):
        return self.w.size


def _check_input(X, d):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != d:
        raise ModelError(f"input has shape {X.shape}, expected (N, {d})")
    return X


def node_output(node, X, kind=ActivationKind.SIGMOID):
    X = _check_input(X, node.d)
    return activate(kind, X @ node.w + node.b)


def pool_outputs(W, b, X, kind=ActivationKind.SIGMOID):
    """Outputs of many candidate nodes at once: ``W`` is (T, d), result (N, T)."""
    return activate(kind, np.asarray(X, dtype=float) @ W.T + b)


@dataclass(frozen=True)
class GeoNet:
    """Frozen network ``f(x) = sum_j beta_j g_j(x)`` plus its scaling statistics.

    ``L = 0`` is allowed and stands for the zero function in normalized space.
    """

    d: int
    m: int
    nodes: tuple = ()
    beta: np.ndarray = None
    norm_stats: NormStats = None
    activation: ActivationKind = ActivationKind.SIGMOID
    variant: str = ""
    seed: int = 0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        beta = np.zeros((0, self.m)) if self.beta is None else np.array(self.beta, dtype=float)
        if beta.ndim == 1:
            beta = beta.reshape(len(nodes), -1)
        if beta.shape != (len(nodes), self.m):
            raise ModelError(f"beta has shape {beta.shape}, expected ({len(nodes)}, {self.m})")
        if not np.all(np.isfinite(beta)):
            raise ModelError("beta has non-finite entries")
        for node in nodes:
            if node.d != self.d:
                raise ModelError(f"node dimension {node.d} does not match d={self.d}")
        st = self.norm_stats
        if st is not None and (st.feature_min.size != self.d or st.target_min.size != self.m):
            raise ModelError("normalization stats do not match d/m")
        beta.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "beta", beta)

    @property
    def L(self):
        return len(self.nodes)

    def weights(self):
        """Stacked input weights (L, d) and biases (L,)."""
        if not self.nodes:
            return np.zeros((0, self.d)), np.zeros(0)
        return np.stack([n.w for n in self.nodes]), np.array([n.b for n in self.nodes])


def hidden_matrix(net, X):
    X = _check_input(X, net.d)
    if net.L == 0:
        return np.zeros((X.shape[0], 0))
    W, b = net.weights()
    return pool_outputs(W, b, X, net.activation)


def predict_normalized(net, Xn):
    return hidden_matrix(net, Xn) @ net.beta


def predict(net, X_raw):
    """Raw features in, raw targets out, using the scaling stored in ``net``."""
    if net.norm_stats is None:
        raise ModelError("model has no normalization stats")
    X_raw = _check_input(X_raw, net.d)
    Yn = predict_normalized(net, net.norm_stats.scale_features(X_raw))
    return net.norm_stats.unscale_targets(Yn)


# ---------------------------------------------------------------------------
# persistence


def _floats(values):
    out = [float(v) for v in np.asarray(values).reshape(-1)]
    if not all(math.isfinite(v) for v in out):
        raise ModelError("non-finite value in model")
    return out


def to_document(net):
    if net.norm_stats is None:
        raise ModelError("cannot serialize a model without normalization stats")
    st = net.norm_stats
    return {
        "schema_version": SCHEMA_VERSION,
        "variant": net.variant,
        "activation": net.activation.value,
        "d": net.d,
        "m": net.m,
        "nodes": [{"w": _floats(n.w), "b": float(n.b)} for n in net.nodes],
        "beta": [_floats(row) for row in net.beta],
        "feature_stats": [{"min": lo, "max": hi} for lo, hi in zip(_floats(st.feature_min), _floats(st.feature_max))],
        "target_stats": [{"min": lo, "max": hi} for lo, hi in zip(_floats(st.target_min), _floats(st.target_max))],
        "seed": int(net.seed),
        "config": net.config,
    }


def serialize(net):
    # Python's float repr is the shortest string that round-trips exactly
    return json.dumps(to_document(net), indent=1, allow_nan=False) + "\n"


def from_document(doc):
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    version = doc.get("schema_version")
    if version is None:
        raise ModelError("model document lacks schema_version")
    if str(version) != SCHEMA_VERSION:
        raise ModelError(f"unsupported schema_version {version!r}")
    try:
        d, m = int(doc["d"]), int(doc["m"])
        nodes = [HiddenNode(nd["w"], nd["b"]) for nd in doc["nodes"]]
        if len(doc["beta"]) != len(nodes):
            raise ModelError(f"beta has {len(doc['beta'])} rows for {len(nodes)} nodes")
        beta = np.array(doc["beta"], dtype=float).reshape(len(nodes), m)
        stats = NormStats([s["min"] for s in doc["feature_stats"]], [s["max"] for s in doc["feature_stats"]],
                          [s["min"] for s in doc["target_stats"]], [s["max"] for s in doc["target_stats"]])
        activation = ActivationKind(doc["activation"])
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model document: {exc}") from exc
    return GeoNet(d=d, m=m, nodes=nodes, beta=beta, norm_stats=stats, activation=activation,
                  variant=str(doc.get("variant", "")), seed=int(doc.get("seed", 0)),
                  config=dict(doc.get("config") or {}))


def deserialize(text):
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from exc
    return from_document(doc)


def _reject_constant(name):
    raise ModelError(f"non-finite value {name} in model document")


def save(net, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(net))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read())

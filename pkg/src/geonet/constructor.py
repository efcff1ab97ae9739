"""Node-by-node construction under the compact angle constraint.

Three variants share one loop:

* ``cfnrw``       -- random nodes from a fixed interval, chosen by the projection
                     gain ``<e, g>^2 / ||g||^2``, greedy output weights.
* ``lightgcnet1`` -- nodes must satisfy ``cos^2(e_q, g) >= gamma_L ||e_q||^2`` for
                     every target, greedy (projection) output weights.
* ``lightgcnet2`` -- same admission rule, output weights re-solved by least
                     squares over all hidden columns after every node.

Everything is expressed in the mean inner product of :mod:`geonet.linalg` on
min-max normalized data.
"""

import csv
import enum
import io
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data as gdata
from .linalg import solve_least_squares
from .model import ActivationKind, GeoNet, HiddenNode, pool_outputs


class Variant(enum.Enum):
    CFN_RW = "cfnrw"
    LIGHTGCNET_I = "lightgcnet1"
    LIGHTGCNET_II = "lightgcnet2"

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower().replace("-", "").replace("_", "")
        aliases = {"cfnrw": cls.CFN_RW, "lightgcnet1": cls.LIGHTGCNET_I, "lightgcneti": cls.LIGHTGCNET_I,
                   "lightgcnet2": cls.LIGHTGCNET_II, "lightgcnetii": cls.LIGHTGCNET_II}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown variant {text!r}; expected one of cfnrw, lightgcnet1, lightgcnet2") from None


class Fallback(enum.Enum):
    ACCEPT_BEST = "accept_best"
    STOP = "stop"


class PoolPolicy(enum.Enum):
    BEST = "best"  # passing candidate with the largest summed margin
    FIRST = "first"  # first passing candidate in draw order


class Status(enum.Enum):
    REACHED_TOL = "ReachedTol"
    NODE_BUDGET = "NodeBudget"
    STALLED = "Stalled"


class Stalled(RuntimeError):
    """No admissible candidate and the fallback policy forbids a relaxed pick."""


# output vectors whose largest entry is below this are treated as the zero vector
DEGENERATE_SCALE = 1e-300


def parse_scopes(text):
    """Parse ``"a:s:b"`` into the inclusive grid a, a+s, ... <= b; a lone number is one scale."""
    if isinstance(text, (int, float)):
        return (float(text),)
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    parts = str(text).split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad scope schedule {text!r}") from None
    if len(nums) == 1:
        return (nums[0],)
    if len(nums) != 3:
        raise ValueError(f"scope schedule must be 'a' or 'a:s:b', got {text!r}")
    start, step, stop = nums
    if step <= 0 or stop < start:
        raise ValueError(f"scope schedule {text!r} is empty or not increasing")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    # round to kill accumulated binary noise such as 0.6000000000000001
    return tuple(round(start + k * step, 12) for k in range(count))


@dataclass(frozen=True)
class TrainConfig:
    variant: Variant = Variant.LIGHTGCNET_II
    tau: float = 0.5
    mu: float = 0.5
    t_max: int = 20
    l_max: int = 200
    tol: float = 0.05
    scopes: tuple = tuple(range(150, 201, 10))
    seed: int = 0
    fallback: Fallback = Fallback.ACCEPT_BEST
    pool_policy: PoolPolicy = None

    def __post_init__(self):
        set_ = object.__setattr__
        if not isinstance(self.variant, Variant):
            set_(self, "variant", Variant.parse(self.variant))
        if not isinstance(self.fallback, Fallback):
            set_(self, "fallback", Fallback(self.fallback))
        if self.pool_policy is None:
            default = PoolPolicy.FIRST if self.variant is Variant.LIGHTGCNET_I else PoolPolicy.BEST
            set_(self, "pool_policy", default)
        elif not isinstance(self.pool_policy, PoolPolicy):
            set_(self, "pool_policy", PoolPolicy(self.pool_policy))
        set_(self, "scopes", parse_scopes(self.scopes))
        if not (0 < self.tau < 1 and 0 < self.mu < 1):
            raise ValueError(f"tau and mu must lie in (0, 1), got tau={self.tau}, mu={self.mu}")
        if int(self.t_max) < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if int(self.l_max) < 0:
            raise ValueError(f"l_max must be >= 0, got {self.l_max}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if not self.scopes or any(s <= 0 for s in self.scopes):
            raise ValueError("scope schedule needs positive scales")
        if any(b <= a for a, b in zip(self.scopes, self.scopes[1:])):
            raise ValueError("scope schedule must be strictly increasing")
        if self.variant is Variant.CFN_RW and len(self.scopes) != 1:
            raise ValueError("cfnrw draws from one fixed interval; give a single scale")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        set_(self, "t_max", int(self.t_max))
        set_(self, "l_max", int(self.l_max))
        set_(self, "seed", int(self.seed))

    def to_dict(self):
        out = asdict(self)
        out.update(variant=self.variant.value, fallback=self.fallback.value,
                   pool_policy=self.pool_policy.value, scopes=list(self.scopes))
        return out

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(extra))}")
        return cls(**doc)


def gamma(L, tau, mu):
    """Dynamic slack ``tau / (L**mu + tau)``; shrinks toward zero as the net grows."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if not (0 < tau < 1 and 0 < mu < 1):
        raise ValueError(f"tau and mu must lie in (0, 1), got tau={tau}, mu={mu}")
    return tau / (L ** mu + tau)


# ---------------------------------------------------------------------------
# candidates


def candidate_rng(seed, node_index, scale_index, candidate_index):
    """Independent stream per candidate so pools can be scored in any order."""
    ss = np.random.SeedSequence(seed, spawn_key=(node_index, scale_index, candidate_index))
    return np.random.default_rng(ss)


def draw_candidate(rng, d, lam):
    if not lam > 0:
        raise ValueError(f"scale must be positive, got {lam}")
    v = rng.uniform(-lam, lam, d + 1)
    return HiddenNode(v[:d], v[d])


def draw_pool(seed, node_index, scale_index, lam, d, t_max):
    """``t_max`` candidates as stacked weights (t_max, d) and biases (t_max,)."""
    W = np.empty((t_max, d))
    b = np.empty(t_max)
    for c in range(t_max):
        node = draw_candidate(candidate_rng(seed, node_index, scale_index, c), d, lam)
        W[c], b[c] = node.w, node.b
    return W, b


@dataclass
class CandidateEvaluation:
    node: HiddenNode
    g: np.ndarray
    cos_sq: np.ndarray
    margins: np.ndarray
    cac_score: float
    delta_score: float
    passes: bool


@dataclass
class PoolScores:
    """Vectorized scores of a candidate pool ``G`` (N, T) against residual ``E`` (N, m)."""

    valid: np.ndarray  # (T,) non-degenerate
    cos_sq: np.ndarray  # (T, m)
    margins: np.ndarray  # (T, m)
    cac: np.ndarray  # (T,)
    delta: np.ndarray  # (T,)
    passes: np.ndarray  # (T,)


def score_pool(G, E, gamma_L):
    G = np.asarray(G, dtype=float)
    E = np.asarray(E, dtype=float)
    N = G.shape[0]
    # cos^2 and the projection gain are scale free, so rescale columns first;
    # a saturated sigmoid can sit at 1e-130 where squaring would underflow
    scale = np.abs(G).max(axis=0)
    valid = scale > DEGENERATE_SCALE
    Gs = G / np.where(valid, scale, 1.0)
    gg = np.einsum("ij,ij->j", Gs, Gs) / N
    ee = np.einsum("ij,ij->j", E, E) / N
    ip = Gs.T @ E / N
    safe_gg = np.where(valid, gg, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_sq = ip ** 2 / (safe_gg[:, None] * ee[None, :])
    cos_sq = np.where(ee[None, :] > 0, np.clip(cos_sq, 0.0, 1.0), 0.0)
    margins = cos_sq - gamma_L * ee[None, :]
    margins = np.where(ee[None, :] > 0, margins, 0.0)
    delta = (ip ** 2 / safe_gg[:, None]).sum(axis=1)
    passes = valid & np.all(margins >= 0, axis=1)
    return PoolScores(valid, cos_sq, margins, margins.sum(axis=1), np.where(valid, delta, 0.0), passes)


def evaluate_candidate(g, residual, gamma_L, node=None):
    """Score one hidden-output vector against every residual column."""
    g = np.asarray(g, dtype=float).reshape(-1)
    E = np.asarray(residual, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    if E.shape[0] != g.size:
        raise ValueError(f"g has {g.size} samples, residual has {E.shape[0]}")
    s = score_pool(g[:, None], E, gamma_L)
    if not s.valid[0]:
        raise ValueError("degenerate candidate: hidden output is the zero vector")
    return CandidateEvaluation(node, g, s.cos_sq[0], s.margins[0], float(s.cac[0]),
                               float(s.delta[0]), bool(s.passes[0]))


# ---------------------------------------------------------------------------
# output weights


def local_beta(residual, g):
    """Per-target projection coefficient ``<e_q, g> / ||g||^2``."""
    g = np.asarray(g, dtype=float).reshape(-1)
    E = np.asarray(residual, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    if E.shape[0] != g.size:
        raise ValueError(f"g has {g.size} samples, residual has {E.shape[0]}")
    scale = np.abs(g).max()
    if not scale > DEGENERATE_SCALE:
        raise ValueError("zero-norm hidden output")
    gs = g / scale
    return (gs @ E) / (gs @ gs) / scale


def update_residual_local(residual, g, beta_row):
    E = np.asarray(residual, dtype=float)
    g = np.asarray(g, dtype=float).reshape(-1)
    beta_row = np.asarray(beta_row, dtype=float).reshape(-1)
    squeeze = E.ndim == 1
    if squeeze:
        E = E[:, None]
    if E.shape != (g.size, beta_row.size):
        raise ValueError(f"shape mismatch: residual {E.shape}, g {g.shape}, beta {beta_row.shape}")
    out = E - np.outer(g, beta_row)
    return out[:, 0] if squeeze else out


def recompute_global(H, F):
    H = np.asarray(H, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if H.ndim == 2 and H.shape[1] == 1 and np.abs(H).max() > DEGENERATE_SCALE:
        # one column: least squares is the projection, use it so both variants agree bit for bit
        beta = local_beta(F, H[:, 0])[None, :]
    else:
        beta = solve_least_squares(H, F)
    return beta, F - H @ beta


def rmse_of(E):
    E = np.asarray(E, dtype=float)
    return float(np.sqrt(np.mean(E ** 2))) if E.size else 0.0


# ---------------------------------------------------------------------------
# selection and training


@dataclass
class PoolStats:
    drawn: int
    passing: int
    best_margin: float
    fallback_used: bool


@dataclass
class TrainState:
    X: np.ndarray
    F: np.ndarray
    residual: np.ndarray
    nodes: list = field(default_factory=list)
    beta: np.ndarray = None

    @property
    def L(self):
        return len(self.nodes)


def select_node(state, config, activation=ActivationKind.SIGMOID):
    """Pick the next hidden node. Returns ``(evaluation, scale_used, PoolStats)``.

    Scales are scanned smallest first and scanning stops at the first scale
    that yields an admissible candidate. Raises :class:`Stalled` if nothing is
    admissible and the fallback is ``stop`` (or every draw was degenerate).
    """
    X, E = state.X, state.residual
    node_index = state.L + 1
    g_L = gamma(node_index, config.tau, config.mu)
    d = X.shape[1]
    drawn = 0
    best = None  # (cac, scale, W row, b, g, scores, idx) over all valid candidates

    if config.variant is Variant.CFN_RW:
        lam = config.scopes[0]
        W, b = draw_pool(config.seed, node_index, 0, lam, d, config.t_max)
        G = pool_outputs(W, b, X, activation)
        s = score_pool(G, E, g_L)
        if not s.valid.any():
            raise Stalled("every candidate was degenerate")
        k = int(np.argmax(np.where(s.valid, s.delta, -np.inf)))
        ev = _evaluation(W, b, G, s, k)
        best_margin = float(np.max(s.cac[s.valid]))
        return ev, lam, PoolStats(config.t_max, int(s.passes.sum()), best_margin, False)

    for si, lam in enumerate(config.scopes):
        W, b = draw_pool(config.seed, node_index, si, lam, d, config.t_max)
        G = pool_outputs(W, b, X, activation)
        s = score_pool(G, E, g_L)
        drawn += config.t_max
        if s.passes.any():
            if config.pool_policy is PoolPolicy.FIRST:
                k = int(np.argmax(s.passes))
            else:
                k = int(np.argmax(np.where(s.passes, s.cac, -np.inf)))
            stats = PoolStats(drawn, int(s.passes.sum()), float(np.max(s.cac[s.valid])), False)
            return _evaluation(W, b, G, s, k), lam, stats
        if s.valid.any():
            k = int(np.argmax(np.where(s.valid, s.cac, -np.inf)))
            if best is None or s.cac[k] > best[0]:
                best = (float(s.cac[k]), lam, W, b, G, s, k)

    if best is None:
        raise Stalled("every candidate was degenerate")
    if config.fallback is Fallback.STOP:
        raise Stalled(f"no candidate satisfied the angle constraint at node {node_index}")
    cac, lam, W, b, G, s, k = best
    return _evaluation(W, b, G, s, k), lam, PoolStats(drawn, 0, cac, True)


def _evaluation(W, b, G, s, k):
    return CandidateEvaluation(HiddenNode(W[k], b[k]), G[:, k].copy(), s.cos_sq[k], s.margins[k],
                               float(s.cac[k]), float(s.delta[k]), bool(s.passes[k]))


TRACE_HEADER = ["L", "scale", "drawn", "passing", "best_margin", "delta",
                "train_rmse", "test_rmse", "elapsed_ms", "fallback"]


@dataclass
class TraceRecord:
    L: int
    scale: float
    drawn: int
    passing: int
    best_margin: float
    delta: float
    train_rmse: float
    test_rmse: float = None
    elapsed_ms: float = 0.0
    fallback: bool = False
    # diagnostics kept in memory only
    gamma: float = None
    norms_before: tuple = None
    norms_after: tuple = None
    margins: tuple = None


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    status: Status = None

    def train_rmse(self):
        return np.array([r.train_rmse for r in self.records])

    def nodes_to_reach(self, target, initial_rmse=None):
        """Smallest L whose training RMSE is <= target, or None if never reached."""
        if initial_rmse is not None and initial_rmse <= target:
            return 0
        for r in self.records:
            if r.train_rmse <= target:
                return r.L
        return None

    def to_csv(self, deterministic=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([r.L, repr(float(r.scale)), r.drawn, r.passing, repr(float(r.best_margin)),
                        repr(float(r.delta)), repr(float(r.train_rmse)),
                        "" if r.test_rmse is None else repr(float(r.test_rmse)),
                        "0.0" if deterministic else repr(float(r.elapsed_ms)), int(r.fallback)])
        status = self.status.value if self.status else ""
        buf.write(f"# status={status}\n")
        return buf.getvalue()

    def write(self, path, deterministic=False):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv(deterministic))

    @classmethod
    def from_csv(cls, text):
        status = None
        rows = []
        lines = text.splitlines()
        for line in lines:
            if line.startswith("# status="):
                status = Status(line.split("=", 1)[1].strip())
        body = [ln for ln in lines if ln and not ln.startswith("#")]
        reader = csv.reader(body)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_HEADER):
                raise ValueError(f"trace line {lineno}: expected {len(TRACE_HEADER)} fields")
            rows.append(TraceRecord(int(row[0]), float(row[1]), int(row[2]), int(row[3]), float(row[4]),
                                    float(row[5]), float(row[6]), float(row[7]) if row[7] else None,
                                    float(row[8]), row[9].strip() in ("1", "true", "True")))
        return cls(rows, status)

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


@dataclass
class TrainResult:
    net: GeoNet
    trace: TrainTrace
    status: Status
    initial_rmse: float

    def __iter__(self):
        return iter((self.net, self.trace, self.status))


def train(config, train_set, test_set=None, auto_normalize=True):
    """Grow a network until the training RMSE reaches ``config.tol``, the node
    budget is spent, or selection stalls.

    With ``auto_normalize`` the min-max statistics are fitted on ``train_set``
    and reused for ``test_set``; otherwise both are taken as already scaled.
    RMSE values in the trace are on the normalized targets.
    """
    if train_set.n < 2:
        raise gdata.DataError("training set needs at least two rows")
    if auto_normalize:
        stats = gdata.fit_stats(train_set)
    else:
        stats = gdata.NormStats.identity(train_set.d, train_set.m)
    tr = gdata.apply_stats(train_set, stats)
    X, F = tr.X, tr.Y
    N, m = F.shape
    Xt = Ft = None
    if test_set is not None and test_set.n > 0:
        if test_set.d != train_set.d or test_set.m != train_set.m:
            raise gdata.DataError("test set dimensions differ from the training set")
        te = gdata.apply_stats(test_set, stats)
        Xt, Ft = te.X, te.Y

    state = TrainState(X, F, F.copy(), [], np.zeros((0, m)))
    global_weights = config.variant is Variant.LIGHTGCNET_II
    H = np.empty((N, config.l_max))
    Ht = np.empty((Xt.shape[0], config.l_max)) if Xt is not None else None
    Et = Ft.copy() if Ft is not None else None
    betas = []
    trace = TrainTrace()
    initial_rmse = rmse_of(state.residual)
    t0 = time.perf_counter()

    while True:
        rmse = rmse_of(state.residual)
        if rmse <= config.tol:
            trace.status = Status.REACHED_TOL
            break
        if state.L >= config.l_max:
            trace.status = Status.NODE_BUDGET
            break
        try:
            ev, lam, pool = select_node(state, config)
        except Stalled:
            trace.status = Status.STALLED
            break
        L = state.L + 1
        norms_before = np.mean(state.residual ** 2, axis=0)
        H[:, L - 1] = ev.g
        gt = None
        if Ht is not None:
            gt = pool_outputs(ev.node.w[None, :], np.array([ev.node.b]), Xt)[:, 0]
            Ht[:, L - 1] = gt
        state.nodes.append(ev.node)
        if global_weights:
            state.beta, state.residual = recompute_global(H[:, :L], F)
            if Ht is not None:
                Et = Ft - Ht[:, :L] @ state.beta
        else:
            row = local_beta(state.residual, ev.g)
            betas.append(row)
            state.residual = update_residual_local(state.residual, ev.g, row)
            state.beta = np.array(betas)
            if Et is not None:
                Et = update_residual_local(Et, gt, row)
        trace.records.append(TraceRecord(
            L=L, scale=lam, drawn=pool.drawn, passing=pool.passing, best_margin=pool.best_margin,
            delta=ev.delta_score, train_rmse=rmse_of(state.residual),
            test_rmse=rmse_of(Et) if Et is not None else None,
            elapsed_ms=(time.perf_counter() - t0) * 1e3, fallback=pool.fallback_used,
            gamma=gamma(L, config.tau, config.mu), norms_before=tuple(norms_before),
            norms_after=tuple(np.mean(state.residual ** 2, axis=0)), margins=tuple(ev.margins)))

    net = GeoNet(d=X.shape[1], m=m, nodes=tuple(state.nodes), beta=state.beta, norm_stats=stats,
                 variant=config.variant.value, seed=config.seed, config=config.to_dict())
    return TrainResult(net, trace, trace.status, initial_rmse)


def replay_rmse(H, F):
    """Greedy and least-squares training RMSE for a fixed column sequence.

    Column ``j`` of ``H`` is the j-th hidden output; entry ``L-1`` of each
    returned curve is the RMSE after the first ``L`` columns.
    """
    H = np.asarray(H, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    E = F.copy()
    greedy, glob = [], []
    for L in range(1, H.shape[1] + 1):
        g = H[:, L - 1]
        E = update_residual_local(E, g, local_beta(E, g))
        greedy.append(rmse_of(E))
        glob.append(rmse_of(recompute_global(H[:, :L], F)[1]))
    return np.array(greedy), np.array(glob)

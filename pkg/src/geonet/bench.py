"""Repeated seeded experiments and their reports."""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as gdata
from .constructor import Status, TrainConfig, train


def rmse(Y, Yhat):
    Y = np.asarray(Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {Yhat.shape}")
    if Y.size == 0:
        raise ValueError("rmse of an empty matrix")
    return float(np.sqrt(np.mean((Y - Yhat) ** 2)))


def node_utilization(L_final, l_max):
    """Fraction of the node budget the constructor actually used."""
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    if not 0 <= L_final <= l_max:
        raise ValueError(f"L_final={L_final} outside [0, {l_max}]")
    return L_final / l_max


def derive_seed(base_seed, repeat):
    state = np.random.SeedSequence(base_seed, spawn_key=(repeat,)).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass
class VariantSpec:
    label: str
    config: TrainConfig


@dataclass
class ExperimentSpec:
    name: str
    dataset: dict
    variants: list
    repeats: int = 30
    train_fraction: float = 0.7
    base_seed: int = 0
    rmse_targets: list = field(default_factory=list)

    def __post_init__(self):
        if int(self.repeats) < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if not self.variants:
            raise ValueError("experiment needs at least one variant")
        labels = [v.label for v in self.variants]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate variant labels in {labels}")
        if self.dataset.get("kind") not in ("function", "grinding", "csv"):
            raise ValueError(f"unknown dataset kind {self.dataset.get('kind')!r}")

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        variants = []
        for i, v in enumerate(doc.pop("variants", [])):
            v = dict(v)
            label = v.pop("label", None) or v.get("variant", f"v{i}")
            v.pop("seed", None)  # seeds come from base_seed
            variants.append(VariantSpec(str(label), TrainConfig.from_dict(v)))
        allowed = {"name", "dataset", "repeats", "train_fraction", "base_seed", "rmse_targets"}
        extra = set(doc) - allowed
        if extra:
            raise ValueError(f"unknown experiment field(s): {', '.join(sorted(extra))}")
        return cls(variants=variants, **doc)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def build_dataset(self, base_dir=None):
        spec = self.dataset
        kind = spec["kind"]
        if kind == "function":
            return gdata.gen_function(int(spec.get("n", 2400)), spec.get("seed", self.base_seed),
                                      spec.get("sampling", "uniform"))
        if kind == "grinding":
            cfg = gdata.GrindingSurrogateConfig(int(spec.get("n", 2000)), spec.get("seed", self.base_seed),
                                                float(spec.get("noise_sd", 0.0)))
            return gdata.gen_grinding_surrogate(cfg)
        path = spec["path"]
        if base_dir is not None and not str(path).startswith("/"):
            path = f"{base_dir}/{path}"
        return gdata.load_csv(path, int(spec.get("targets", 1)))


RAW_FIELDS = ["repeat", "seed", "variant", "algorithm", "status", "nodes", "l_max", "utilization",
              "train_rmse", "test_rmse", "wall_time_s"]
TIME_FIELDS = ("wall_time_s", "mean_time_s", "std_time_s")


def _target_key(t):
    return f"nodes_to_{t:g}"


def _run_repeat(spec, ds, r):
    seed = derive_seed(spec.base_seed, r)
    train_set, test_set = gdata.split(ds, spec.train_fraction, seed)
    rows, traces = [], {}
    for v in spec.variants:
        cfg = replace(v.config, seed=seed)
        result = train(cfg, train_set, test_set)
        trace = result.trace
        last = trace.records[-1] if trace.records else None
        train_rmse = last.train_rmse if last else result.initial_rmse
        test_rmse = last.test_rmse if last else _zero_test_rmse(result.net, test_set)
        row = {
            "repeat": r, "seed": seed, "variant": v.label, "algorithm": cfg.variant.value,
            "status": result.status.value, "nodes": result.net.L, "l_max": cfg.l_max,
            "utilization": node_utilization(result.net.L, cfg.l_max) if cfg.l_max else 0.0,
            "train_rmse": train_rmse, "test_rmse": test_rmse,
            "wall_time_s": last.elapsed_ms / 1e3 if last else 0.0,
        }
        for t in spec.rmse_targets:
            row[_target_key(t)] = trace.nodes_to_reach(t, result.initial_rmse)
        rows.append(row)
        traces[v.label] = trace
    return rows, traces


def _zero_test_rmse(net, test_set):
    Yn = net.norm_stats.scale_targets(test_set.Y)
    return rmse(Yn, np.zeros_like(Yn))


@dataclass
class BenchReport:
    name: str
    labels: list
    rmse_targets: list
    raw: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)  # (repeat, label) -> TrainTrace, never serialized

    def aggregate(self, label):
        for row in self.aggregates:
            if row["variant"] == label:
                return row
        raise KeyError(label)

    def rows(self, label):
        return [row for row in self.raw if row["variant"] == label]


def aggregate_rows(raw, labels, rmse_targets):
    out = []
    for label in labels:
        rows = [r for r in raw if r["variant"] == label]
        agg = {"variant": label, "algorithm": rows[0]["algorithm"] if rows else "",
               "repeats": len(rows), "valid": bool(rows)}
        cols = {"train_rmse": "train_rmse", "test_rmse": "test_rmse", "time_s": "wall_time_s"}
        for name, key in cols.items():
            vals = np.array([r[key] for r in rows if r[key] is not None], dtype=float)
            agg[f"mean_{name}"] = float(vals.mean()) if vals.size else None
            agg[f"std_{name}"] = float(vals.std()) if vals.size else None
        agg["mean_nodes"] = float(np.mean([r["nodes"] for r in rows])) if rows else None
        agg["mean_utilization"] = float(np.mean([r["utilization"] for r in rows])) if rows else None
        for st in Status:
            agg[f"status_{st.value}"] = sum(1 for r in rows if r["status"] == st.value)
        for t in rmse_targets:
            hits = [r[_target_key(t)] for r in rows if r[_target_key(t)] is not None]
            agg[f"reached_{t:g}"] = len(hits)
            agg[f"mean_{_target_key(t)}"] = float(np.mean(hits)) if hits else None
        out.append(agg)
    return out


def run_experiment(spec, jobs=1, keep_traces=False, base_dir=None):
    """Run every variant on every repeat; each repeat gets its own split and seed.

    All variants in a repeat share the split and the candidate stream seed, so
    their differences are paired. ``jobs > 1`` farms repeats out to processes;
    results are assembled in repeat order either way.
    """
    ds = spec.build_dataset(base_dir)
    repeats = range(int(spec.repeats))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_repeat, [spec] * len(repeats), [ds] * len(repeats), repeats))
    else:
        results = [_run_repeat(spec, ds, r) for r in repeats]
    labels = [v.label for v in spec.variants]
    report = BenchReport(spec.name, labels, list(spec.rmse_targets))
    for r, (rows, traces) in zip(repeats, results):
        report.raw.extend(rows)
        if keep_traces:
            report.traces.update({(r, lab): tr for lab, tr in traces.items()})
    report.aggregates = aggregate_rows(report.raw, labels, report.rmse_targets)
    return report


# ---------------------------------------------------------------------------
# emission


def _scrub(row, deterministic):
    if not deterministic:
        return dict(row)
    return {k: (0.0 if k in TIME_FIELDS and v is not None else v) for k, v in row.items()}


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _raw_fields(report):
    return RAW_FIELDS + [_target_key(t) for t in report.rmse_targets]


def _agg_fields(report):
    fields = ["variant", "algorithm", "repeats", "valid"]
    for name in ("train_rmse", "test_rmse", "time_s"):
        fields += [f"mean_{name}", f"std_{name}"]
    fields += ["mean_nodes", "mean_utilization"] + [f"status_{st.value}" for st in Status]
    for t in report.rmse_targets:
        fields += [f"reached_{t:g}", f"mean_{_target_key(t)}"]
    return fields


def report_to_csv(report, deterministic=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if report.raw:
        fields = _raw_fields(report)
        w.writerow(fields)
        for row in report.raw:
            row = _scrub(row, deterministic)
            w.writerow([_cell(row.get(f)) for f in fields])
        buf.write("\n")
    fields = _agg_fields(report)
    w.writerow(fields)
    for row in report.aggregates:
        row = _scrub(row, deterministic)
        w.writerow([_cell(row.get(f)) for f in fields])
    return buf.getvalue()


def report_to_json(report, deterministic=False):
    doc = {
        "name": report.name,
        "variants": report.labels,
        "rmse_targets": report.rmse_targets,
        "raw": [_scrub(r, deterministic) for r in report.raw],
        "aggregates": [_scrub(a, deterministic) for a in report.aggregates],
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def emit_report(report, fmt, path, deterministic=False):
    """Write ``report`` as ``"csv"`` or ``"json"``.

    ``deterministic`` zeroes the wall-clock columns so repeated runs produce
    byte-identical files.
    """
    fmt = fmt.lower()
    if fmt == "csv":
        text = report_to_csv(report, deterministic)
    elif fmt == "json":
        text = report_to_json(report, deterministic)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _parse_cell(text):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_report(path):
    """Parse an emitted report back into ``(raw_rows, aggregate_rows)``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        doc = json.loads(text)
        return doc["raw"], doc["aggregates"]
    blocks = [b for b in text.split("\n\n") if b.strip()]
    tables = []
    for block in blocks:
        rows = list(csv.reader(block.splitlines()))
        header, body = rows[0], rows[1:]
        tables.append([{k: _parse_cell(v) for k, v in zip(header, r)} for r in body])
    if len(tables) == 1:
        return [], tables[0]
    return tables[0], tables[1]


def summary_table(report):
    """Plain-text table: training time, training RMSE, testing RMSE, nodes, utilization."""
    head = f"{'variant':<16}{'time_s':>10}{'train_rmse':>13}{'test_rmse':>13}{'nodes':>9}{'util':>7}"
    lines = [head, "-" * len(head)]
    for a in report.aggregates:
        def fmt(v, spec):
            return format(v, spec) if v is not None and not (isinstance(v, float) and math.isnan(v)) else "-"
        lines.append(f"{a['variant']:<16}{fmt(a['mean_time_s'], '10.3f')}{fmt(a['mean_train_rmse'], '13.5f')}"
                     f"{fmt(a['mean_test_rmse'], '13.5f')}{fmt(a['mean_nodes'], '9.2f')}"
                     f"{fmt(a['mean_utilization'], '7.3f')}")
    return "\n".join(lines)

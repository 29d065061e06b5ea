"""Registry of example problems: circle packing, boolean least squares, path
planning, collision avoidance, sparse recovery, phase retrieval, filter design
and sparse singular vectors.

Every example draws its data from a seeded generator, builds a DCCP problem,
and computes its metrics from the final assignment by evaluating the
original expressions.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .atoms import abs_, max_entries, norm1, norm2, norm_inf, sqrt, square, sum_entries, vstack
from .ccp import CcpParams, SolveResult, solve_dccp
from .expr import Constant, Constraint, Variable
from .report import RunReport
from .transform import Minimize, Problem


@dataclass
class ExampleSpec:
    name: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    ccp: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params), "seed": self.seed, "ccp": dict(self.ccp)}

    @classmethod
    def from_dict(cls, d: dict) -> ExampleSpec:
        return cls(d["name"], dict(d.get("params", {})), int(d.get("seed", 0)), dict(d.get("ccp", {})))


@dataclass
class Instance:
    problem: Problem
    families: dict[str, list[Constraint]]
    initial: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)


@dataclass
class Example:
    name: str
    defaults: dict
    build: Callable[[dict, np.random.Generator], Instance]
    metrics: Callable[[Instance, dict], dict]
    figure: Callable[[Instance, dict], dict]
    ccp: dict = field(default_factory=dict)
    primary: str = "objective"
    description: str = ""


EXAMPLES: dict[str, Example] = {}
DATA_STREAM = 0xDA7A


def _register(ex: Example) -> Example:
    EXAMPLES[ex.name] = ex
    return ex


def _col(a) -> np.ndarray:
    return np.asarray(a, dtype=float).reshape(-1, 1)


def _val(x: dict, v: Variable) -> np.ndarray:
    return np.asarray(x[v], dtype=float)


# -- circle packing --------------------------------------------------------------------


def _circles_build(params, rng):
    n = int(params["n"])
    r = rng.uniform(params["r_min"], params["r_max"], size=n)
    c = Variable((n, 2), name="c")
    rows = vstack([norm_inf(c[i, :]) for i in range(n)])
    objective = max_entries(rows + Constant(_col(r)))
    sep = [norm2(c[i, :] - c[j, :]) >= r[i] + r[j] for i in range(n - 1) for j in range(i + 1, n)]
    return Instance(Problem(Minimize(objective), sep), {"separation": sep}, data={"c": c, "r": r})


def _circles_metrics(inst, x):
    c, r = _val(x, inst.data["c"]), inst.data["r"]
    half = float(np.max(np.abs(c).max(axis=1) + r))
    overlap = 0.0
    for i, j in itertools.combinations(range(len(r)), 2):
        overlap = max(overlap, r[i] + r[j] - float(np.linalg.norm(c[i] - c[j])))
    return {
        "half_side": half,
        "coverage": float(np.pi * np.sum(r ** 2) / (2 * half) ** 2),
        "max_overlap": overlap,
    }


def _circles_figure(inst, x):
    return {"centers": _val(x, inst.data["c"]).tolist(), "radii": inst.data["r"].tolist()}


_register(Example(
    "circle-packing",
    {"n": 14, "r_min": 0.5, "r_max": 1.5},
    _circles_build, _circles_metrics, _circles_figure,
    ccp={"restarts": 5}, primary="coverage",
    description="pack n circles with seeded uniform radii into the smallest square",
))


# -- boolean least squares ---------------------------------------------------------------


def _bls_data(params, rng):
    n, m = int(params["n"]), int(params["m"])
    A = rng.standard_normal((m, n))
    s = rng.choice([-1.0, 1.0], size=n)
    sigma = math.sqrt(n / float(params["snr"]))
    y = A @ s + sigma * rng.standard_normal(m)
    return A, s, y


def boolean_ls_problem(A: np.ndarray, y: np.ndarray, s: np.ndarray | None = None) -> Instance:
    """minimize ||y - A x|| subject to x_i^2 = 1; ``s`` is the true signal if known."""
    A, y = np.asarray(A, float), np.asarray(y, float).ravel()
    x = Variable(A.shape[1], name="x")
    objective = norm2(Constant(_col(y)) - A @ x)
    cons = [square(x) == 1]
    s = np.zeros(A.shape[1]) if s is None else np.asarray(s, float)
    return Instance(Problem(Minimize(objective), cons), {"boolean": cons}, data={"x": x, "A": A, "s": s, "y": y})


def _bls_build(params, rng):
    A, s, y = _bls_data(params, rng)
    return boolean_ls_problem(A, y, s)


def exhaustive_bls(A: np.ndarray, y: np.ndarray, chunk: int = 1 << 14):
    """Global minimizer of ||y - A x|| over x in {-1, 1}^n by enumeration."""
    n = A.shape[1]
    if n > 24:
        raise ValueError("exhaustive search is limited to n <= 24")
    best_val, best_x = math.inf, None
    bits = np.arange(n)
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n))
        X = np.where((codes[:, None] >> bits) & 1, 1.0, -1.0)
        vals = np.linalg.norm(y[None, :] - X @ A.T, axis=1)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_x = float(vals[k]), X[k]
    return best_val, best_x


def _bls_metrics(inst, x):
    xv = _val(x, inst.data["x"]).ravel()
    A, s, y = inst.data["A"], inst.data["s"], inst.data["y"]
    signs = np.where(xv >= 0, 1.0, -1.0)
    out = {
        "ber": float(np.mean(signs != s)),
        "objective_rounded": float(np.linalg.norm(y - A @ signs)),
        "max_rounding": float(np.max(np.abs(xv - signs))),
    }
    if A.shape[1] <= 20:
        best, _ = exhaustive_bls(A, y)
        out["global_optimum"] = best
        out["relative_gap"] = float((out["objective_rounded"] - best) / max(best, 1e-12))
    return out


def _bls_figure(inst, x):
    return {"x": _val(x, inst.data["x"]).ravel().tolist(), "s": inst.data["s"].tolist()}


_register(Example(
    "boolean-ls",
    {"n": 100, "m": 100, "snr": 17.0},
    _bls_build, _bls_metrics, _bls_figure, primary="ber",
    description="maximum likelihood detection of a +-1 signal from y = A s + v",
))


# -- path planning -------------------------------------------------------------------------


def _path_build(params, rng):
    d, n, m = int(params["d"]), int(params["n"]), int(params["obstacles"])
    a = np.zeros(d)
    b = np.full(d, float(params["extent"]))
    centers, radii = [], []
    while len(centers) < m:
        p = rng.uniform(0.2, 0.8, size=d) * params["extent"]
        r = rng.uniform(params["r_min"], params["r_max"])
        # keep both endpoints outside every obstacle
        if np.linalg.norm(p - a) > r + 0.5 and np.linalg.norm(p - b) > r + 0.5:
            centers.append(p)
            radii.append(r)
    x = Variable((d, n + 1), name="x")
    L = Variable(1, name="L")
    ends = [x[:, 0] == _col(a), x[:, n] == _col(b)]
    steps = [norm2(x[:, i] - x[:, i - 1]) <= L / n for i in range(1, n + 1)]
    avoid = [norm2(x[:, i] - Constant(_col(p))) >= r
             for i in range(1, n + 1) for p, r in zip(centers, radii)]
    p = Problem(Minimize(L), ends + steps + avoid)
    return Instance(p, {"endpoints": ends, "segments": steps, "obstacles": avoid},
                    data={"x": x, "L": L, "a": a, "b": b, "centers": centers, "radii": radii})


def _path_metrics(inst, x):
    pts = _val(x, inst.data["x"])
    seg = np.linalg.norm(np.diff(pts, axis=1), axis=0)
    clearance = math.inf
    for p, r in zip(inst.data["centers"], inst.data["radii"]):
        clearance = min(clearance, float(np.min(np.linalg.norm(pts[:, 1:] - p[:, None], axis=0) - r)))
    return {
        "L": float(_val(x, inst.data["L"]).item()),
        "path_length": float(seg.sum()),
        "straight_distance": float(np.linalg.norm(inst.data["b"] - inst.data["a"])),
        "min_clearance": None if math.isinf(clearance) else clearance,
    }


def _path_figure(inst, x):
    return {"path": _val(x, inst.data["x"]).tolist(),
            "centers": [p.tolist() for p in inst.data["centers"]],
            "radii": list(map(float, inst.data["radii"]))}


_register(Example(
    "path-planning",
    {"d": 2, "n": 50, "obstacles": 3, "extent": 10.0, "r_min": 1.0, "r_max": 2.0},
    # a small tau0 lets early iterates cut straight through obstacles, and pushing
    # them out later tends to split the path around both sides
    _path_build, _path_metrics, _path_figure, ccp={"tau0": 1.0}, primary="L",
    description="shortest discretized path between two points around circular obstacles",
))


# -- control with collision avoidance ---------------------------------------------------------


DYN_A = np.array([[1, 0, 0.1, 0], [0, 1, 0, 0.1], [0, 0, 0.95, 0], [0, 0, 0, 0.95]])
DYN_B = np.array([[0, 0], [0, 0], [0.1, 0], [0, 0.1]])
DYN_C = np.array([[1, 0, 0, 0], [0, 1, 0, 0]])


def _collision_build(params, rng):
    agents, T = int(params["agents"]), int(params["T"])
    d_min, f_max, R = float(params["d_min"]), float(params["f_max"]), float(params["radius"])
    base = rng.uniform(0, 2 * np.pi)
    # agents start on a circle and head for the antipodal point, so unconstrained
    # trajectories cross near the center
    angles = base + np.pi * np.arange(agents) / agents + rng.uniform(-0.3, 0.3, size=agents)
    starts = [R * np.array([np.cos(t), np.sin(t)]) for t in angles]
    X = [Variable((4, T + 1), name=f"x{i}") for i in range(agents)]
    U = [Variable((2, T), name=f"u{i}") for i in range(agents)]
    dyn, ends, limits = [], [], []
    for i in range(agents):
        init = _col(np.concatenate([starts[i], [0, 0]]))
        final = _col(np.concatenate([-starts[i], [0, 0]]))
        ends += [X[i][:, 0] == init, X[i][:, T] == final]
        dyn.append(X[i][:, 1:] == DYN_A @ X[i][:, :T] + DYN_B @ U[i])
        limits.append(abs_(U[i]) <= f_max)
    Y = [DYN_C @ X[i] for i in range(agents)]
    avoid = [norm2(Y[i][:, t] - Y[j][:, t]) >= d_min
             for t in range(T + 1) for i in range(agents - 1) for j in range(i + 1, agents)]
    fuel = norm1(U[0])
    for u in U[1:]:
        fuel = fuel + norm1(u)
    p = Problem(Minimize(fuel), ends + dyn + limits + avoid)
    return Instance(p, {"boundary": ends, "dynamics": dyn, "input_limit": limits, "separation": avoid},
                    data={"X": X, "U": U, "d_min": d_min})


def _collision_metrics(inst, x):
    Y = [DYN_C @ _val(x, v) for v in inst.data["X"]]
    dist = math.inf
    for i, j in itertools.combinations(range(len(Y)), 2):
        dist = min(dist, float(np.min(np.linalg.norm(Y[i] - Y[j], axis=0))))
    return {
        "fuel": float(sum(np.abs(_val(x, u)).sum() for u in inst.data["U"])),
        "min_distance": dist,
        "d_min": inst.data["d_min"],
    }


def _collision_figure(inst, x):
    return {"outputs": [(DYN_C @ _val(x, v)).tolist() for v in inst.data["X"]], "d_min": inst.data["d_min"]}


_register(Example(
    "collision-avoidance",
    {"agents": 2, "T": 100, "d_min": 0.6, "f_max": 0.5, "radius": 2.0},
    _collision_build, _collision_metrics, _collision_figure, primary="fuel",
    description="minimum-fuel control of linear systems whose outputs keep a minimum distance",
))


# -- sparse recovery ------------------------------------------------------------------------------


def _sparse_data(params, rng):
    n, m, k = int(params["n"]), int(params["m"]), int(params["cardinality"])
    x0 = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    x0[support] = np.abs(rng.normal(0.0, 10.0, size=k))
    A = rng.standard_normal((m, n))
    return A, x0, A @ x0


def _sparse_build(params, rng):
    A, x0, y = _sparse_data(params, rng)
    n = A.shape[1]
    x = Variable(n, name="x")
    match = [A @ x == _col(y)]
    if params["objective"] == "sqrt":
        p = Problem(Minimize(sum_entries(sqrt(x))), match)
        families = {"measurements": match}
    elif params["objective"] == "l1":
        sign = [x >= 0]
        p = Problem(Minimize(sum_entries(x)), match + sign)
        families = {"measurements": match, "nonnegativity": sign}
    else:
        raise ValueError("objective must be 'sqrt' or 'l1'")
    return Instance(p, families, initial={x: np.ones((n, 1))}, data={"x": x, "x0": x0})


def _sparse_metrics(inst, x):
    xv, x0 = _val(x, inst.data["x"]).ravel(), inst.data["x0"]
    err = float(np.linalg.norm(xv - x0) / np.linalg.norm(x0))
    return {"relative_error": err, "success": bool(err < 0.01),
            "cardinality": int(np.sum(np.abs(xv) > 1e-3 * np.abs(xv).max()))}


def _sparse_figure(inst, x):
    return {"x": _val(x, inst.data["x"]).ravel().tolist(), "x0": inst.data["x0"].tolist()}


_register(Example(
    "sparse-recovery",
    {"n": 100, "m": 70, "cardinality": 30, "objective": "sqrt"},
    _sparse_build, _sparse_metrics, _sparse_figure, primary="success",
    description="recover a sparse nonnegative signal by minimizing the sum of square roots",
))


# -- phase retrieval --------------------------------------------------------------------------------


_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _phase_build(params, rng):
    n, m = int(params["n"]), int(params["m"])
    x0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    y = np.abs(a @ np.conj(x0))
    x = Variable((2, n), name="x")
    z = Variable((2, m), name="z")
    link = [z == x @ a.real.T + _ROT @ x @ a.imag.T]
    mags = [norm2(z[:, k]) == float(y[k]) for k in range(m)]
    p = Problem(Minimize(Constant(0.0)), link + mags)
    return Instance(p, {"link": link, "magnitudes": mags},
                    initial={z: rng.uniform(size=(2, m))},
                    data={"x": x, "a": a, "x0": x0, "y": y})


def _phase_metrics(inst, x):
    xr = _val(x, inst.data["x"])
    xc = xr[0] + 1j * xr[1]
    x0, a, y = inst.data["x0"], inst.data["a"], inst.data["y"]
    mag = np.abs(a @ np.conj(xc))
    # distance to x0 up to a global phase
    inner = np.vdot(xc, x0)
    phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    return {"max_magnitude_error": float(np.max(np.abs(mag - y))),
            "relative_error": float(np.linalg.norm(phase * xc - x0) / np.linalg.norm(x0))}


def _phase_figure(inst, x):
    xr = _val(x, inst.data["x"])
    return {"x": xr.tolist(), "x0": [inst.data["x0"].real.tolist(), inst.data["x0"].imag.tolist()]}


_register(Example(
    "phase-retrieval",
    {"n": 128, "m": 384},
    _phase_build, _phase_metrics, _phase_figure,
    ccp={"restarts": 3}, primary="max_magnitude_error",
    description="recover a complex signal from magnitudes of inner products",
))


# -- magnitude filter design -----------------------------------------------------------------------


def _filter_build(params, rng):
    n, N = int(params["n"]), int(params["N"])
    omega = np.pi * np.arange(N + 1) / N
    l_pass = int(np.sum(omega <= params["pass_edge"] * np.pi))
    l_stop = int(np.sum(omega < params["stop_edge"] * np.pi))
    h = Variable(n, name="h")
    u_stop = Variable(1, name="u_stop")
    k = np.arange(1, n + 1)
    lower, upper, stop = [], [], []
    for l, w in enumerate(omega):
        mag = norm2(np.vstack([np.cos(w * k), -np.sin(w * k)]) @ h)
        if l < l_pass:
            lower.append(mag >= params["L_pass"])
        if l < l_stop:
            upper.append(mag <= params["U_pass"])
        else:
            stop.append(mag <= u_stop)
    p = Problem(Minimize(u_stop), lower + upper + stop)
    return Instance(p, {"passband_lower": lower, "pass_upper": upper, "stopband": stop},
                    data={"h": h, "u_stop": u_stop, "omega": omega, "l_pass": l_pass, "l_stop": l_stop,
                          "L_pass": params["L_pass"], "U_pass": params["U_pass"]})


def _response(h, omega):
    k = np.arange(1, len(h) + 1)
    return np.abs(np.exp(-1j * np.outer(omega, k)) @ h)


def _filter_metrics(inst, x):
    h = _val(x, inst.data["h"]).ravel()
    H = _response(h, inst.data["omega"])
    lp, ls = inst.data["l_pass"], inst.data["l_stop"]
    return {"U_stop": float(_val(x, inst.data["u_stop"]).item()),
            "stopband_peak": float(H[ls:].max()),
            "stopband_peak_db": float(20 * np.log10(max(H[ls:].max(), 1e-300))),
            "passband_min": float(H[:lp].min()), "passband_max": float(H[:ls].max())}


def _filter_figure(inst, x):
    d = inst.data
    omega = np.linspace(0, np.pi, 512)
    return {"omega": omega.tolist(), "magnitude": _response(_val(x, d["h"]).ravel(), omega).tolist(),
            "pass_edge": float(d["omega"][d["l_pass"] - 1]), "stop_edge": float(d["omega"][d["l_stop"]]),
            "L_pass": d["L_pass"], "U_pass": d["U_pass"], "U_stop": float(_val(x, d["u_stop"]).item())}


_register(Example(
    "filter-design",
    {"n": 10, "N": 100, "pass_edge": 0.2, "stop_edge": 0.4, "L_pass": 0.89, "U_pass": 1.12},
    _filter_build, _filter_metrics, _filter_figure, primary="U_stop",
    description="lowpass FIR design with passband magnitude bounds, minimizing the stopband level",
))


# -- sparse singular vectors -----------------------------------------------------------------------


def _ssv_build(params, rng):
    n = int(params["n"])
    A = rng.standard_normal((n, n))
    x = Variable(n, name="x")
    obj = norm2(A @ x)
    cons = [norm2(x) == 1, norm1(x) <= params["mu"]]
    sense = params["sense"]
    if sense not in ("minimize", "maximize"):
        raise ValueError("sense must be 'minimize' or 'maximize'")
    p = Problem(obj, cons, sense=sense)
    return Instance(p, {"unit_norm": cons[:1], "sparsity": cons[1:]}, data={"x": x, "A": A})


def _ssv_metrics(inst, x):
    xv, A = _val(x, inst.data["x"]).ravel(), inst.data["A"]
    sv = np.linalg.svd(A, compute_uv=False)
    return {"norm_Ax": float(np.linalg.norm(A @ xv)), "norm1": float(np.abs(xv).sum()),
            "cardinality": int(np.sum(np.abs(xv) > 1e-4)),
            "sigma_min": float(sv[-1]), "sigma_max": float(sv[0]),
            "min_column_norm": float(np.linalg.norm(A, axis=0).min())}


def _ssv_figure(inst, x):
    return {"x": _val(x, inst.data["x"]).ravel().tolist()}


_register(Example(
    "sparse-singular-vectors",
    {"n": 100, "mu": 5.0, "sense": "minimize"},
    _ssv_build, _ssv_metrics, _ssv_figure, primary="norm_Ax",
    description="unit vectors with bounded l1 norm making ||A x|| small or large",
))


# -- running ----------------------------------------------------------------------------------------


def get_example(name: str) -> Example:
    try:
        return EXAMPLES[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}") from None


def list_examples() -> list[ExampleSpec]:
    return [ExampleSpec(ex.name, dict(ex.defaults), 0, dict(ex.ccp)) for ex in EXAMPLES.values()]


def _coerce(default, value):
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int) and not isinstance(value, bool):
        f = float(value)
        if f != int(f):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(f)
    if isinstance(default, float):
        return float(value)
    return value


def resolve(spec: ExampleSpec) -> tuple[Example, dict, CcpParams]:
    ex = get_example(spec.name)
    unknown = set(spec.params) - set(ex.defaults)
    if unknown:
        raise KeyError(f"unknown parameter(s) for {spec.name}: {', '.join(sorted(unknown))}")
    params = {k: _coerce(v, spec.params.get(k, v)) for k, v in ex.defaults.items()}
    ccp = {**ex.ccp, **spec.ccp, "rng_seed": spec.seed}
    return ex, params, CcpParams(**ccp)


def build_instance(spec: ExampleSpec) -> Instance:
    ex, params, _ = resolve(spec)
    # tagged entropy keeps the data stream apart from the CCP restart streams
    return ex.build(params, np.random.default_rng([spec.seed, DATA_STREAM]))


def _families(inst: Instance, x) -> dict:
    out = {}
    for fam, cons in inst.families.items():
        out[fam] = max((c.violation(x) for c in cons), default=0.0)
    return out


def run_example(spec: ExampleSpec) -> RunReport:
    ex, params, ccp = resolve(spec)
    inst = build_instance(spec)
    t0 = time.perf_counter()
    result: SolveResult = solve_dccp(inst.problem, ccp, initial=inst.initial or None)
    wall = time.perf_counter() - t0
    x = result.assignment
    if x:
        metrics = ex.metrics(inst, x)
        feas = _families(inst, x)
        figure = ex.figure(inst, x)
        objective = inst.problem.objective_value(x)
    else:
        metrics, feas, figure, objective = {}, {}, {}, None
    return RunReport(
        example=ex.name,
        params=params,
        seed=spec.seed,
        ccp=ccp.to_dict(),
        status=result.status.value,
        objective=objective,
        feasibility=feas,
        trace=[vars(r).copy() for r in result.trace],
        metrics=metrics,
        best_restart=result.best_restart,
        solution={v.name(): np.asarray(val).tolist() for v, val in x.items()},
        figure=figure,
        message=result.message,
        timing={"wall_seconds": wall},
    )


def sweep_values(start: float, step: float, stop: float) -> list[float]:
    if step <= 0:
        raise ValueError("sweep step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(max(count, 0))]


def run_sweep(spec: ExampleSpec, param: str, values, instances: int = 1) -> list[RunReport]:
    """One report per (value, instance); instance ``i`` uses seed ``spec.seed + i``."""
    out = []
    for v in values:
        for i in range(instances):
            s = ExampleSpec(spec.name, {**spec.params, param: v}, spec.seed + i, dict(spec.ccp))
            out.append(run_example(s))
    return out


__all__ = [
    "ExampleSpec", "Instance", "Example", "EXAMPLES", "get_example", "list_examples",
    "build_instance", "boolean_ls_problem", "run_example", "run_sweep", "sweep_values",
    "exhaustive_bls", "resolve",
]

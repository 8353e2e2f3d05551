"""Scenario files: JSON description of a code, a noise model and analysis settings.

Complex numbers are written as ``[re, im]`` pairs (plain numbers are read as
real); matrices are row-major nested lists. :func:`validate_scenario`
collects every problem with a path to the offending key before anything is
computed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .channels import Channel, tensor_power
from .channels import amplitude_damping as ad_channel
from .matcore import CodeProjector, embed
from .series import (
    InteractionModel,
    KrausSeries,
    LindbladData,
    amplitude_damping_series,
    exact_interaction_channel,
    from_interaction,
    lindblad_channel,
    lindblad_to_series,
    parallel_first_order,
    tensor_power_series,
    validate,
)

DEFAULT_TOLERANCES = {
    "kl": 1e-10,
    "expansion": 1e-9,
    "bounds": 1e-8,
    "fit_floor": 1e-13,
    "series": 1e-10,
}
DEFAULT_GRID = {"start": 1e-3, "stop": 1e-1, "points": 12, "scale": "log"}
NOISE_TYPES = ("kraus_series", "interaction", "lindblad", "amplitude_damping", "parallel")
ORTHO_TOL = 1e-9
SERIES_ORDER = 3


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


# -- parsing helpers ------------------------------------------------------------


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _complex(x, path: str, diags: list) -> complex:
    if _is_number(x):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(_is_number(v) for v in x):
        return complex(x[0], x[1])
    diags.append(f"{path}: expected a number or [re, im]")
    return 0j


def _vector(x, path: str, diags: list, dim: int | None = None) -> np.ndarray | None:
    if not isinstance(x, list) or not x:
        diags.append(f"{path}: expected a non-empty list of entries")
        return None
    v = np.array([_complex(e, f"{path}[{i}]", diags) for i, e in enumerate(x)])
    if dim is not None and v.size != dim:
        diags.append(f"{path}: length {v.size} does not match dimension {dim}")
        return None
    return v


def _matrix(x, path: str, diags: list, dim: int | None = None) -> np.ndarray | None:
    if not isinstance(x, list) or not x or not all(isinstance(r, list) for r in x):
        diags.append(f"{path}: expected a matrix as a list of rows")
        return None
    rows = [[_complex(e, f"{path}[{i}][{j}]", diags) for j, e in enumerate(r)] for i, r in enumerate(x)]
    if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
        diags.append(f"{path}: matrix must be square")
        return None
    m = np.array(rows)
    if dim is not None and m.shape[0] != dim:
        diags.append(f"{path}: shape {m.shape} does not match dimension {dim}")
        return None
    return m


def _hermitian(m, path: str, diags: list):
    if m is not None and np.max(np.abs(m - m.conj().T)) > 1e-10:
        diags.append(f"{path}: matrix is not Hermitian")
        return None
    return m


def _operator(x, path: str, diags: list, dims: list[int] | None, dim: int | None):
    """A full matrix, or ``{"site": k, "matrix": m}`` placed on factor ``k``."""
    if isinstance(x, dict):
        if dims is None:
            diags.append(f"{path}: site operators need system_dims")
            return None
        site = x.get("site")
        if not isinstance(site, int) or isinstance(site, bool) or not 0 <= site < len(dims):
            diags.append(f"{path}.site: expected a factor index below {len(dims)}")
            return None
        m = _matrix(x.get("matrix"), f"{path}.matrix", diags, dims[site])
        return None if m is None else embed(m, site, dims)
    return _matrix(x, path, diags, dim)


def _require(d: dict, key: str, path: str, diags: list):
    if key not in d:
        diags.append(f"{path}.{key}: missing")
        return None
    return d[key]


# -- noise ------------------------------------------------------------------------


@dataclass(frozen=True)
class ResolvedNoise:
    """``series`` keeps every order (padded to at least 3); ``first_order`` lists
    the operators entering the KL test; ``exact(eps)`` is the exact channel
    when the model has one."""

    series: KrausSeries
    first_order: KrausSeries
    exact: Callable[[float], Channel] | None
    eps_meaning: str


def _parse_noise(n, path: str, diags: list, dims: list[int] | None, dim: int | None):
    """Return a resolver (no arguments) or None when diagnostics were added."""
    if not isinstance(n, dict):
        diags.append(f"{path}: expected an object")
        return None
    kind = n.get("type")
    if kind not in NOISE_TYPES:
        diags.append(f"{path}.type: expected one of {', '.join(NOISE_TYPES)}")
        return None
    before = len(diags)

    if kind == "kraus_series":
        ops = _require(n, "ops", path, diags)
        if not isinstance(ops, list) or not ops:
            if ops is not None:
                diags.append(f"{path}.ops: expected a list of coefficient lists")
            return None
        coeffs = []
        for i, op in enumerate(ops):
            if not isinstance(op, list) or not op:
                diags.append(f"{path}.ops[{i}]: expected a list of coefficient matrices")
                continue
            coeffs.append([_operator(c, f"{path}.ops[{i}][{k}]", diags, dims, dim) for k, c in enumerate(op)])
        if len(diags) > before:
            return None
        order = max(len(c) for c in coeffs)
        d = coeffs[0][0].shape[0]
        arr = np.zeros((len(coeffs), order, d, d), dtype=complex)
        for i, c in enumerate(coeffs):
            for k, m in enumerate(c):
                if m.shape != (d, d):
                    diags.append(f"{path}.ops[{i}][{k}]: dimension differs from ops[0][0]")
                    return None
                arr[i, k] = m
        try:
            series = KrausSeries(arr)
        except ValueError as exc:
            diags.append(f"{path}.ops: {exc}")
            return None
        return lambda: ResolvedNoise(series.padded(max(SERIES_ORDER, series.max_order)), series, None, "eps")

    if kind == "lindblad":
        h_raw = n.get("hamiltonian")
        ops = n.get("lindblad_ops", [])
        if not isinstance(ops, list):
            diags.append(f"{path}.lindblad_ops: expected a list")
            return None
        ls = [_operator(o, f"{path}.lindblad_ops[{i}]", diags, dims, dim) for i, o in enumerate(ops)]
        h = None
        if h_raw is not None:
            h = _hermitian(_operator(h_raw, f"{path}.hamiltonian", diags, dims, dim), f"{path}.hamiltonian", diags)
        if len(diags) > before:
            return None
        size = dim if dim is not None else (ls[0].shape[0] if ls else (h.shape[0] if h is not None else None))
        if size is None:
            diags.append(f"{path}: cannot infer the dimension")
            return None
        l = LindbladData(np.zeros((size, size)) if h is None else h, ls)

        def resolve():
            s = lindblad_to_series(l)
            return ResolvedNoise(s.padded(SERIES_ORDER), s, lambda eps: lindblad_channel(l, eps * eps), "sqrt(t)")
        return resolve

    if kind == "interaction":
        lam = n.get("lambda", 1.0)
        if not _is_number(lam) or lam <= 0:
            diags.append(f"{path}.lambda: expected a positive number")
        terms_raw = _require(n, "terms", path, diags)
        terms = []
        if terms_raw is not None and (not isinstance(terms_raw, list) or not terms_raw):
            diags.append(f"{path}.terms: expected a non-empty list")
        elif terms_raw is not None:
            for i, t in enumerate(terms_raw):
                tp = f"{path}.terms[{i}]"
                if not isinstance(t, dict):
                    diags.append(f"{tp}: expected an object with J and K")
                    continue
                j = _hermitian(_operator(_require(t, "J", tp, diags), f"{tp}.J", diags, dims, dim), f"{tp}.J", diags)
                k = _hermitian(_matrix(_require(t, "K", tp, diags), f"{tp}.K", diags), f"{tp}.K", diags)
                terms.append((j, k))
        env_raw = _require(n, "env_state", path, diags)
        env = None
        if isinstance(env_raw, dict):
            env = _hermitian(_matrix(env_raw.get("density"), f"{path}.env_state.density", diags),
                             f"{path}.env_state.density", diags)
        elif env_raw is not None:
            env = _vector(env_raw, f"{path}.env_state", diags)
            if env is not None and abs(np.linalg.norm(env) - 1) > ORTHO_TOL:
                diags.append(f"{path}.env_state: vector is not normalised")
        if len(diags) > before:
            return None
        dims_env = {k.shape[0] for _, k in terms}
        dims_sys = {j.shape[0] for j, _ in terms}
        if len(dims_env) != 1 or len(dims_sys) != 1 or env.shape[0] != dims_env.copy().pop():
            diags.append(f"{path}: inconsistent system or environment dimensions")
            return None
        try:
            model = InteractionModel(float(lam), terms, env)
        except ValueError as exc:
            diags.append(f"{path}: {exc}")
            return None

        def resolve():
            s = from_interaction(model, SERIES_ORDER)
            return ResolvedNoise(s, s, lambda eps: exact_interaction_channel(model, eps / model.lam), "t*lambda")
        return resolve

    if kind == "amplitude_damping":
        q = n.get("n_qubits")
        if not isinstance(q, int) or isinstance(q, bool) or q < 1:
            diags.append(f"{path}.n_qubits: expected a positive integer")
            return None
        if dim is not None and dim != 2 ** q:
            diags.append(f"{path}.n_qubits: 2^{q} does not match dimension {dim}")
            return None

        def resolve():
            full = amplitude_damping_series(q, SERIES_ORDER, full=True)
            first = amplitude_damping_series(q, SERIES_ORDER, full=False)
            return ResolvedNoise(full, first, lambda eps: tensor_power(ad_channel(eps), q), "eps")
        return resolve

    # parallel
    copies = n.get("copies")
    if not isinstance(copies, int) or isinstance(copies, bool) or copies < 1:
        diags.append(f"{path}.copies: expected a positive integer")
        return None
    inner_dim = None
    if dim is not None:
        inner_dim = int(round(dim ** (1.0 / copies)))
        if inner_dim ** copies != dim:
            diags.append(f"{path}.copies: dimension {dim} is not a {copies}-th power")
            return None
    inner = _parse_noise(n.get("inner"), f"{path}.inner", diags, None, inner_dim)
    if inner is None:
        return None

    def resolve():
        r = inner()
        full = tensor_power_series(r.series, copies)
        first = parallel_first_order(r.first_order, copies)
        exact = None if r.exact is None else (lambda eps: tensor_power(r.exact(eps), copies))
        return ResolvedNoise(full, first, exact, r.eps_meaning)
    return resolve


# -- scenario ---------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    system_dims: list
    code: CodeProjector
    raw: dict = field(repr=False)
    eps_grid: np.ndarray = field(repr=False)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    samples: int = 10
    bounds_eps: float = 0.1
    expect: dict = field(default_factory=dict)
    _resolver: Callable[[], ResolvedNoise] | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return int(np.prod(self.system_dims))

    def noise(self) -> ResolvedNoise:
        return self._resolver()

    def with_overrides(self, seed: int | None = None, tolerances: dict | None = None) -> "Scenario":
        tol = dict(self.tolerances)
        tol.update(tolerances or {})
        return Scenario(self.name, self.system_dims, self.code, self.raw, self.eps_grid, tol,
                        self.seed if seed is None else seed, self.samples, self.bounds_eps,
                        self.expect, self._resolver)


def _grid(g, path: str, diags: list) -> np.ndarray | None:
    if g is None:
        g = DEFAULT_GRID
    if not isinstance(g, dict):
        diags.append(f"{path}: expected an object with start, stop, points, scale")
        return None
    g = {**DEFAULT_GRID, **g}
    ok = True
    for key in ("start", "stop"):
        if not _is_number(g[key]) or g[key] <= 0:
            diags.append(f"{path}.{key}: expected a positive number")
            ok = False
    if not isinstance(g["points"], int) or isinstance(g["points"], bool) or g["points"] < 2:
        diags.append(f"{path}.points: expected an integer >= 2")
        ok = False
    if g["scale"] not in ("log", "linear"):
        diags.append(f"{path}.scale: expected 'log' or 'linear'")
        ok = False
    if ok and g["stop"] <= g["start"]:
        diags.append(f"{path}.stop: must exceed start")
        ok = False
    if not ok:
        return None
    fn = np.geomspace if g["scale"] == "log" else np.linspace
    return fn(float(g["start"]), float(g["stop"]), g["points"])


def _check_tolerances(t, path: str, diags: list) -> dict:
    if t is None:
        return dict(DEFAULT_TOLERANCES)
    if not isinstance(t, dict):
        diags.append(f"{path}: expected an object of named tolerances")
        return dict(DEFAULT_TOLERANCES)
    out = dict(DEFAULT_TOLERANCES)
    for k, v in t.items():
        if k not in DEFAULT_TOLERANCES:
            diags.append(f"{path}.{k}: unknown tolerance (known: {', '.join(sorted(DEFAULT_TOLERANCES))})")
        elif not _is_number(v) or v <= 0:
            diags.append(f"{path}.{k}: expected a positive number")
        else:
            out[k] = float(v)
    return out


def parse_scenario(data: Any) -> tuple[Scenario | None, list[str]]:
    """Parse a decoded JSON document; returns ``(scenario, diagnostics)``."""
    diags: list[str] = []
    if not isinstance(data, dict):
        return None, ["<root>: expected a JSON object"]
    name = data.get("name")
    if not isinstance(name, str) or not name:
        diags.append("name: expected a non-empty string")
    dims = data.get("system_dims")
    if not isinstance(dims, list) or not dims or not all(
            isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims):
        diags.append("system_dims: expected a non-empty list of positive integers")
        dims = None
    dim = int(np.prod(dims)) if dims else None

    code = None
    code_raw = data.get("code")
    basis_raw = code_raw.get("basis") if isinstance(code_raw, dict) else None
    if not isinstance(basis_raw, list) or not basis_raw:
        diags.append("code.basis: expected a non-empty list of vectors")
    else:
        vecs = []
        for i, v in enumerate(basis_raw):
            vec = _vector(v, f"code.basis[{i}]", diags, dim)
            if vec is None:
                continue
            if abs(np.linalg.norm(vec) - 1.0) > ORTHO_TOL:
                diags.append(f"code.basis[{i}]: vector is not normalised")
            elif any(abs(np.vdot(w, vec)) > ORTHO_TOL for w in vecs):
                diags.append(f"code.basis[{i}]: vector is not orthogonal to the earlier basis vectors")
            vecs.append(vec)
        if len(vecs) == len(basis_raw) and not any(d.startswith("code.") for d in diags):
            code = CodeProjector.from_vectors(vecs)

    resolver = None
    if "noise" not in data:
        diags.append("noise: missing")
    else:
        resolver = _parse_noise(data["noise"], "noise", diags, dims, dim)

    grid = _grid(data.get("eps_grid"), "eps_grid", diags)
    tol = _check_tolerances(data.get("tolerances"), "tolerances", diags)
    seed = data.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        diags.append("seed: expected a non-negative integer")
    samples = data.get("samples", 10)
    if not isinstance(samples, int) or isinstance(samples, bool) or samples < 1:
        diags.append("samples: expected a positive integer")
    beps = data.get("bounds_eps", 0.1)
    if not _is_number(beps) or beps <= 0:
        diags.append("bounds_eps: expected a positive number")
    expect = data.get("expect", {})
    if not isinstance(expect, dict):
        diags.append("expect: expected an object")
        expect = {}
    unknown = set(data) - {"name", "description", "system_dims", "code", "noise", "eps_grid",
                           "tolerances", "seed", "samples", "bounds_eps", "expect"}
    for k in sorted(unknown):
        diags.append(f"{k}: unknown key")
    if diags:
        return None, diags
    return Scenario(name, dims, code, data, grid, tol, seed, samples, float(beps), expect, resolver), []


def load_scenario(path) -> tuple[Scenario | None, list[str]]:
    """Read and parse a scenario file. Unreadable or malformed JSON becomes a diagnostic."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return None, [f"<file>: cannot read {path}: {exc.strerror or exc}"]
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, [f"<file>: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]
    return parse_scenario(data)


def validate_scenario(path) -> list[str]:
    """Every schema or consistency problem in the file; empty when it is well formed.

    Besides parsing, the noise model is built and its series checked for
    trace preservation at the represented orders.
    """
    sc, diags = load_scenario(path)
    if sc is None:
        return diags
    try:
        noise = sc.noise()
    except ValueError as exc:
        return [f"noise: {exc}"]
    if noise.series.dim != sc.dim:
        return [f"noise: acts on dimension {noise.series.dim}, system has {sc.dim}"]
    rep = validate(noise.first_order, sc.tolerances["series"])
    if not rep.passed:
        bad = [k for k, r in enumerate(rep.residuals) if r > rep.tol]
        return [f"noise: series is not trace preserving at order(s) {bad}"]
    return []


def bundled_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def bundled_scenarios() -> list[Path]:
    return sorted(bundled_dir().glob("*.json"))

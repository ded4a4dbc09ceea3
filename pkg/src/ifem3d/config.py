"""Run configuration files (INI syntax, versioned by ``schema_version``).

Example::

    [run]
    schema_version = 1
    study = convergence          ; solve | convergence | conditioning | epsilon_robustness
    problem = example1           ; example1 | example2 | example3 | patch | custom

    [problem]
    beta_minus = 1
    beta_plus = 100

    [mesh]
    ns = 8, 16, 32
    subdivision = six_tet

    [discretization]
    sigma = auto                 ; auto = max(beta-, beta+)
    enrichment = pointwise
    split = plane

    [solver]
    method = pcg
    preconditioner = amg
    tol = 1e-8
    max_iter = 1000
    strength = 0.08
    sweeps = 1

Section ``[study]`` holds ``rhos`` (conditioning) and ``epsilons``
(epsilon_robustness); ``[output]`` holds ``dir``, ``surface_map``, ``vtk`` and
``timings`` (off by default so that result CSVs are byte-identical across
reruns; measured times always go to ``timings.csv``). A ``custom`` problem
reads ``[custom]``: ``domain = lo, hi``, ``interface = <name>`` plus ``interface.<param>`` keys, and numpy
expressions in x, y, z for ``f`` (or ``f_minus``/``f_plus``), ``g``,
``q1``, ``q2`` (flux jump along the minus-to-plus normal), and optionally
``u_minus``/``u_plus`` with ``grad_minus``/``grad_plus`` as 3-tuples.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import AssemblyParams
from .enrichment import JumpData
from .levelset import LEVEL_SETS, make_level_set
from .mesh import BoxDomain
from .pipeline import SolverOptions
from .problems import PROBLEMS, ExactSolution, ProblemSpec, make_problem

__all__ = ["SCHEMA_VERSION", "STUDIES", "ConfigError", "RunConfig", "load_config", "parse_config"]

SCHEMA_VERSION = 1
STUDIES = ("solve", "convergence", "conditioning", "epsilon_robustness")
_PROBLEM_PARAMS = {
    "example1": ("radius",),
    "example2": ("c",),
    "example3": ("epsilon", "alpha"),
    "patch": ("offset",),
}


class ConfigError(ValueError):
    """Invalid configuration; carries the section, key and line when known."""

    def __init__(self, message: str, section: str | None = None, key: str | None = None, line: int | None = None):
        where = ""
        if section:
            where = f"[{section}]" + (f" {key}" if key else "")
            if line:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)
        self.section, self.key, self.line = section, key, line


@dataclass
class RunConfig:
    study: str
    problem: str
    ns: list
    beta_minus: float = 1.0
    beta_plus: float = 100.0
    problem_params: dict = field(default_factory=dict)
    subdivision: str = "six_tet"
    assembly: AssemblyParams = field(default_factory=AssemblyParams)
    solver: SolverOptions = field(default_factory=SolverOptions)
    rhos: list = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0])
    epsilons: list = field(default_factory=lambda: [1e-1, 1e-6])
    output_dir: str = "results"
    surface_map: bool = True
    vtk: bool = False
    timings: bool = False
    custom: dict = field(default_factory=dict)
    source: str = ""

    def make_problem(self, beta_plus: float | None = None, epsilon: float | None = None) -> ProblemSpec:
        """Problem instance; ``beta_plus`` and ``epsilon`` override the file."""
        bp = self.beta_plus if beta_plus is None else beta_plus
        if self.problem == "custom":
            return _custom_problem(self.custom, self.beta_minus, bp)
        kw = dict(self.problem_params)
        if epsilon is not None:
            kw["epsilon"] = epsilon
        return make_problem(self.problem, beta_minus=self.beta_minus, beta_plus=bp, **kw)


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number."""
    out, sec = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            out[(sec, None)] = i
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", s)
        if m and sec is not None:
            out[(sec, m.group(1).strip().lower())] = i
    return out


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, lines: dict):
        self.cp, self.lines = cp, lines

    def err(self, msg, section, key=None):
        return ConfigError(msg, section, key, self.lines.get((section, key), self.lines.get((section, None))))

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def str(self, section, key, default=None):
        if not self.has(section, key):
            if default is None:
                raise self.err("missing required key", section, key)
            return default
        return self.cp.get(section, key).strip()

    def float(self, section, key, default=None):
        if not self.has(section, key):
            return default
        try:
            return float(self.cp.get(section, key))
        except ValueError:
            raise self.err(f"expected a number, got {self.cp.get(section, key)!r}", section, key) from None

    def int(self, section, key, default=None):
        v = self.float(section, key, None)
        if v is None:
            return default
        if v != int(v):
            raise self.err(f"expected an integer, got {v}", section, key)
        return int(v)

    def bool(self, section, key, default):
        if not self.has(section, key):
            return default
        try:
            return self.cp.getboolean(section, key)
        except ValueError:
            raise self.err("expected a boolean", section, key) from None

    def floats(self, section, key, default=None):
        if not self.has(section, key):
            return default
        try:
            return [float(v) for v in self.cp.get(section, key).split(",") if v.strip()]
        except ValueError:
            raise self.err("expected a comma-separated list of numbers", section, key) from None


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from None
    r = _Reader(cp, _line_index(text))
    if not cp.has_section("run"):
        raise ConfigError("missing [run] section")
    version = r.int("run", "schema_version")
    if version is None:
        raise r.err("missing required key", "run", "schema_version")
    if version != SCHEMA_VERSION:
        raise r.err(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})", "run", "schema_version")
    study = r.str("run", "study")
    if study not in STUDIES:
        raise r.err(f"unknown study {study!r}; choose from {', '.join(STUDIES)}", "run", "study")
    problem = r.str("run", "problem")
    if problem != "custom" and problem not in PROBLEMS:
        raise r.err(f"unknown problem {problem!r}; choose from {', '.join(sorted(PROBLEMS))} or custom",
                    "run", "problem")

    ns = r.floats("mesh", "ns", [8.0, 16.0, 32.0])
    if not ns or any(n != int(n) or n < 1 for n in ns):
        raise r.err("ns must be positive integers", "mesh", "ns")
    ns = [int(n) for n in ns]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise r.err("ns must be strictly increasing", "mesh", "ns")
    subdivision = r.str("mesh", "subdivision", "six_tet")
    if subdivision not in ("six_tet", "five_tet"):
        raise r.err(f"unknown subdivision {subdivision!r}", "mesh", "subdivision")

    bm = r.float("problem", "beta_minus", 1.0)
    bp = r.float("problem", "beta_plus", 100.0)
    if not (bm > 0 and bp > 0):
        raise r.err("coefficients must be positive", "problem")
    params = {}
    for key in _PROBLEM_PARAMS.get(problem, ()):
        v = r.float("problem", key)
        if v is not None:
            params[key] = v
    if cp.has_section("problem"):
        known = {"beta_minus", "beta_plus", *_PROBLEM_PARAMS.get(problem, ())}
        for key in cp.options("problem"):
            if key not in known:
                raise r.err(f"unknown key for problem {problem!r}", "problem", key)

    sigma_s = r.str("discretization", "sigma", "auto")
    if sigma_s == "auto":
        sigma = None
    else:
        sigma = r.float("discretization", "sigma")
    try:
        assembly = AssemblyParams(
            sigma=sigma,
            enrichment_mode=r.str("discretization", "enrichment", "pointwise"),
            split=r.str("discretization", "split", "plane"),
        )
    except ValueError as exc:
        raise r.err(str(exc), "discretization") from None

    amg = {}
    for key, conv in (("strength", r.float), ("omega", r.float), ("sweeps", r.int), ("max_coarse", r.int)):
        v = conv("solver", key)
        if v is not None:
            amg[key] = v
    if r.has("solver", "prolongation"):
        amg["prolongation"] = r.str("solver", "prolongation")
    try:
        solver = SolverOptions(
            method=r.str("solver", "method", "pcg"),
            preconditioner=r.str("solver", "preconditioner", "amg"),
            tol=r.float("solver", "tol", 1e-8),
            max_iter=r.int("solver", "max_iter", 1000),
            amg=amg,
        )
    except ValueError as exc:
        raise r.err(str(exc), "solver") from None

    cfg = RunConfig(
        study=study,
        problem=problem,
        ns=ns,
        beta_minus=bm,
        beta_plus=bp,
        problem_params=params,
        subdivision=subdivision,
        assembly=assembly,
        solver=solver,
        rhos=r.floats("study", "rhos", [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]),
        epsilons=r.floats("study", "epsilons", [1e-1, 1e-6]),
        output_dir=r.str("output", "dir", "results"),
        surface_map=r.bool("output", "surface_map", True),
        vtk=r.bool("output", "vtk", False),
        timings=r.bool("output", "timings", False),
        source=source,
    )
    if any(v <= 0 for v in cfg.rhos):
        raise r.err("rhos must be positive", "study", "rhos")
    if study == "epsilon_robustness" and problem != "example3":
        raise r.err("epsilon_robustness needs problem = example3", "run", "study")
    if study == "convergence" and len(ns) < 2:
        raise r.err("a convergence study needs at least two values", "mesh", "ns")
    if problem == "custom":
        if not cp.has_section("custom"):
            raise ConfigError("problem = custom needs a [custom] section")
        cfg.custom = dict(cp.items("custom"))
        cfg.custom["_lines"] = {k: r.lines.get(("custom", k)) for k in cfg.custom}
        _custom_problem(cfg.custom, bm, bp)  # validate now
        if study in ("convergence", "epsilon_robustness") and "u_minus" not in cfg.custom:
            raise r.err(f"study {study!r} needs u_minus/u_plus for a custom problem", "custom")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


# --------------------------------------------------------------- custom data
_NAMESPACE = {k: getattr(np, k) for k in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sinh", "cosh", "tanh", "arctan", "arctan2", "pi", "e",
    "minimum", "maximum", "where",
)}


def _expr(text: str, key: str, lines: dict):
    """Compile a numpy expression in x, y, z to a function of points (..., 3)."""
    try:
        code = compile(text, f"<{key}>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"invalid expression: {exc.msg}", "custom", key, lines.get(key)) from None
    for name in code.co_names:
        if name not in _NAMESPACE and name not in ("x", "y", "z"):
            raise ConfigError(f"unknown name {name!r} in expression", "custom", key, lines.get(key))

    def fn(p):
        p = np.asarray(p, dtype=float)
        env = dict(_NAMESPACE, x=p[..., 0], y=p[..., 1], z=p[..., 2])
        v = eval(code, {"__builtins__": {}}, env)  # noqa: S307 - names are whitelisted above
        if isinstance(v, tuple):
            return np.stack([np.broadcast_to(np.asarray(c, dtype=float), p.shape[:-1]) for c in v], axis=-1)
        return np.broadcast_to(np.asarray(v, dtype=float), p.shape[:-1]).copy()

    return fn


def _custom_problem(c: dict, bm: float, bp: float) -> ProblemSpec:
    lines = c.get("_lines", {})

    def get(key, required=True):
        if key not in c:
            if required:
                raise ConfigError("missing required key", "custom", key)
            return None
        return _expr(c[key], key, lines)

    try:
        lo, hi = (float(v) for v in c.get("domain", "-1, 1").split(","))
        domain = BoxDomain.cube(lo, hi)
    except ValueError:
        raise ConfigError("domain must be 'lo, hi'", "custom", "domain", lines.get("domain")) from None
    name = c.get("interface", "sphere")
    if name not in LEVEL_SETS:
        raise ConfigError(f"unknown interface {name!r}", "custom", "interface", lines.get("interface"))
    lp = {}
    for k, v in c.items():
        if k.startswith("interface."):
            try:
                lp[k.split(".", 1)[1]] = float(v)
            except ValueError:
                vals = tuple(float(s) for s in v.split(","))
                lp[k.split(".", 1)[1]] = vals
    try:
        ls = make_level_set(name, **lp)
    except TypeError as exc:
        raise ConfigError(f"bad interface parameters: {exc}", "custom", "interface") from None
    g = get("g")
    exact = None
    if "u_minus" in c:
        exact = ExactSolution(get("u_minus"), get("u_plus"), get("grad_minus"), get("grad_plus"))
    fm, fp = get("f_minus", False), get("f_plus", False)
    f = get("f", fm is None)
    if f is None:
        def f(x):
            return np.where(ls.value(x) > 0, fp(x), fm(x))
    jump = JumpData(q1=get("q1", False), q2_scalar=get("q2", False))
    return ProblemSpec(domain, ls, bm, bp, f, g, jump, exact, name="custom", f_minus=fm, f_plus=fp)

"""Comparison tables, field exports, and the cross-engine validation suite.

Four engines compute the mean exit time: 'formula' (closed-form two-term
expansion), 'fem' (finite elements on the full domain), 'robin_fem'
(finite elements on the head disk with the neck reduced to a Robin
window), and 'mc' (reflected Brownian walkers).  Table runs sweep the
published parameter grids, evaluate every engine at the head center, and
write CSV with the published values side by side; field runs sample
engines on a spatial grid; validate cross-checks the engines against
each other and against closed-form identities.

CSV conventions: '#'-prefixed metadata lines (version, config echo,
optional timestamp), then one header line, then rows.  Numbers print
with 6 significant digits by default (--precision overrides).  With
timestamps disabled, a rerun with the same config is byte-identical.
"""

from __future__ import annotations

import csv
import datetime
import io
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__, asymptotics, fem, geometry, montecarlo

__all__ = [
    "ConfigError",
    "EmptyGrid",
    "RunSpec",
    "ComparisonRow",
    "CheckResult",
    "run_table51",
    "run_table52",
    "run_field",
    "run_single",
    "run_validate",
    "rows_to_csv",
    "rows_from_csv",
    "format_rows",
    "load_reference",
]

ENGINES = ("formula", "fem", "robin_fem", "mc")
MODES = ("table51", "table52", "field", "single", "validate")

# published parameter grids: (eps, L) and (eps, l, r1, r2), head radius 1
TABLE51_GRID = tuple(
    [(0.1, L) for L in (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)]
    + [(e, 2.0) for e in (0.09, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03,
                          0.02, 0.01)])
TABLE52_GRID = (
    (0.1, 1.0, 0.7, 0.9),
    (0.1, 1.5, 0.7, 0.9),
    (0.1, 2.0, 0.7, 0.9),
    (0.1, 1.0, 1.0, 1.0),
    (0.05, 1.0, 1.0, 1.0),
    (0.05, 2.0, 1.0, 1.0),
    (0.05, 3.0, 1.0, 1.0),
)


class ConfigError(Exception):
    """Invalid run configuration (maps to process exit status 2)."""


class EmptyGrid(ValueError):
    """No grid point fell inside the domain."""


@dataclass(frozen=True)
class RunSpec:
    """A fully resolved run request.

    geometry holds config-file keys (head_radius, eps, neck, L, l, r1,
    r2, theta1, theta2, alpha, beta) as strings or numbers; table modes
    ignore it except head_radius and sweep their own grids.  point is
    the evaluation point for single runs, h_list the mesh ladder for the
    finite element engines (scaled per row for thin necks), and skip
    names engines whose validation checks are reported as skipped.
    """

    mode: str
    engines: tuple = ("formula", "fem", "robin_fem")
    geometry: dict = field(default_factory=dict)
    point: tuple = (0.0, 0.0)
    out: str | None = None
    h_list: tuple = (0.04, 0.02, 0.01)
    dt: float = 1e-4
    walkers: int = 2000
    seed: int = 2026
    max_steps: int | None = None
    grid: int = 25
    precision: int = 6
    skip: tuple = ()
    timestamp: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(
                f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        bad = [e for e in self.engines if e not in ENGINES]
        if bad:
            raise ConfigError(
                f"unknown engines {bad}; valid: {', '.join(ENGINES)}")
        if not self.engines:
            raise ConfigError("at least one engine must be selected")
        bad = [e for e in self.skip if e not in ENGINES]
        if bad:
            raise ConfigError(f"unknown skip entries {bad}")
        if not self.h_list or any(h <= 0.0 for h in self.h_list):
            raise ConfigError("h_list must be nonempty positive mesh sizes")
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")
        if self.walkers < 1:
            raise ConfigError("walkers must be >= 1")
        if self.grid < 2:
            raise ConfigError("grid must be >= 2")
        if self.precision < 1:
            raise ConfigError("precision must be >= 1")


@dataclass(frozen=True)
class ComparisonRow:
    """One table row: swept parameters plus per-engine values.

    Only parameters and raw engine values are stored; every difference
    column is recomputed from them at output time, so the two can never
    drift apart.  Failed engines hold nan and an explanatory note.
    """

    params: tuple
    values: tuple
    note: str = ""

    def param(self, name: str) -> float:
        for k, v in self.params:
            if k == name:
                return v
        raise KeyError(name)

    def value(self, name: str) -> float:
        for k, v in self.values:
            if k == name:
                return v
        raise KeyError(name)

    def difference(self, a: str, b: str) -> float:
        """Recomputed column a - b."""
        return self.value(a) - self.value(b)


@dataclass(frozen=True)
class CheckResult:
    """One validation check: PASS, FAIL, or SKIP with the measured value."""

    name: str
    status: str
    measured: float
    target: str
    detail: str = ""

    def line(self) -> str:
        m = "" if math.isnan(self.measured) else f" measured {self.measured:.6g}"
        d = f" ({self.detail})" if self.detail else ""
        return f"[{self.status}] {self.name}:{m} target {self.target}{d}"


# -- engine plumbing ----------------------------------------------------------

_TRI_BUDGET = 1.0e6  # direct sparse solves stay tractable below this


def _h_ladder(h_list, eps: float, area: float) -> list:
    """Per-row mesh ladder: resolve the window, respect the size budget.

    The default ladder assumes a window half-width of 0.1; thinner
    windows scale h proportionally.  Levels whose estimated triangle
    count (area / (0.433 h^2) for near-equilateral elements) exceeds the
    budget are dropped, keeping at least two levels when the window
    resolution guard h < eps/2 allows.
    """
    scale = min(1.0, eps / 0.1)
    floor = math.sqrt(area / (0.433 * _TRI_BUDGET))
    hs = [h * scale for h in sorted(set(h_list), reverse=True)]
    kept = [h for h in hs if h >= floor] or [max(floor, hs[-1])]
    while len(kept) < 2:
        nxt = kept[-1] / math.sqrt(2.0)
        if nxt < floor:
            break
        kept.append(nxt)
    clamped = [min(h, 0.45 * eps) for h in kept]
    return sorted(set(clamped), reverse=True)


def _domain_area(g) -> float:
    return g.area()


def _mc_config(spec: RunSpec, g, start, mean_guess: float) -> montecarlo.WalkConfig:
    """Walk config for one harness run: dt under the step guard, horizon
    ~25x the expected mean so censoring is negligible."""
    dt = min(spec.dt, g.eps * g.eps / 40.0)
    if spec.max_steps is not None:
        steps = spec.max_steps
    else:
        steps = int(25.0 * max(mean_guess, 1.0) / dt) + 1
    return montecarlo.WalkConfig(dt=dt, walkers=spec.walkers, seed=spec.seed,
                                 max_steps=steps, start=start)


def _mean_guess(g) -> float:
    """Cheap a-priori scale of the exit time for horizon sizing."""
    if g.mode == "neck_only":
        return 0.5 * g.neck.length ** 2
    try:
        p = asymptotics.params_from_geometry(g)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return asymptotics.mfpt_spine(p, g.head.center).value
    except Exception:
        return 100.0


def _formula_at(g, point) -> asymptotics.ExpansionResult:
    p = asymptotics.params_from_geometry(g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", asymptotics.TooCloseToWindow)
        if g.mode == "head_only":
            return asymptotics.mfpt_neumann_robin(p, point)
        return asymptotics.mfpt_spine(p, point)


def _robin_head(g):
    """Head-disk Robin geometry equivalent to a spine's neck reduction."""
    p = asymptotics.params_from_geometry(g)
    return geometry.build_head_only(g.head.radius, g.eps, p.alpha, p.beta,
                                    center=g.head.center), p


# -- tables -------------------------------------------------------------------


def load_reference(name: str) -> list:
    """Bundled published table as a list of row dicts (floats)."""
    from importlib import resources

    path = resources.files("spinemfpt").joinpath("data",
                                                 f"reference_{name}.csv")
    rows = []
    with path.open() as f:
        body = [ln for ln in f if not ln.startswith("#")]
    for raw in csv.DictReader(body):
        rows.append({k: float(v) for k, v in raw.items()})
    return rows


def _ref_index(rows, keys):
    return {tuple(round(r[k], 9) for k in keys): r for r in rows}


def _diff_note(printed: float, recomputed: float, label: str) -> str:
    if abs(printed - recomputed) > 2e-3:
        return (f"published column {label} prints {printed:g} but its value "
                f"columns give {recomputed:.4f}")
    return ""


def _run_engine(vals, notes, name, fn):
    """Run one engine for a row; failures annotate instead of aborting."""
    try:
        vals[name] = float(fn())
    except Exception as exc:  # noqa: BLE001 - per-row annotation is the contract
        vals[name] = float("nan")
        notes.append(f"{name}: {type(exc).__name__}: {exc}")


def run_table51(spec: RunSpec) -> list:
    """Straight-neck sweep at the head center.

    Engines formula, fem, and robin_fem are required (they fill the
    u_eps, u, and u_r columns); mc adds an optional column pair.
    """
    need = {"formula", "fem", "robin_fem"}
    if not need <= set(spec.engines):
        raise ConfigError(
            f"table51 needs engines {sorted(need)}, got {list(spec.engines)}")
    ref = _ref_index(load_reference("table51"), ("eps", "L"))
    R = float(spec.geometry.get("head_radius", 1.0))
    rows = []
    for eps, L in TABLE51_GRID:
        g = geometry.build_straight_spine(R, eps, L)
        center = g.head.center
        vals, notes = {}, []
        _run_engine(vals, notes, "u_eps",
                    lambda: _formula_at(g, center).value)
        gh, p = _robin_head(g)
        hs_head = _h_ladder(spec.h_list, eps, gh.head.area)
        _run_engine(vals, notes, "u_r",
                    lambda: fem.refine_and_extrapolate(
                        gh, "robin", center, hs_head,
                        alpha=p.alpha, beta=p.beta)["extrapolated"])
        hs_full = _h_ladder(spec.h_list, eps, _domain_area(g))
        _run_engine(vals, notes, "u",
                    lambda: fem.refine_and_extrapolate(
                        g, "escape", center, hs_full)["extrapolated"])
        if "mc" in spec.engines:
            cfg = _mc_config(spec, g, center, _mean_guess(g))
            est = montecarlo.simulate_mfpt(g, cfg)
            vals["mc"] = est.mean
            vals["mc_stderr"] = est.stderr
        key = (round(eps, 9), round(L, 9))
        if key in ref:
            r = ref[key]
            note = _diff_note(r["d_ueps_ur_printed"], r["u_eps"] - r["u_r"],
                              "u_eps-u_r")
            if note:
                notes.append(note)
        rows.append(ComparisonRow(params=(("eps", eps), ("L", L)),
                                  values=tuple(vals.items()),
                                  note="; ".join(notes)))
    return rows


def run_table52(spec: RunSpec) -> list:
    """Curved-neck sweep at the head center (formula uses the effective
    curvature-corrected neck length)."""
    need = {"formula", "fem"}
    if not need <= set(spec.engines):
        raise ConfigError(
            f"table52 needs engines {sorted(need)}, got {list(spec.engines)}")
    ref = _ref_index(load_reference("table52"), ("eps", "l", "r1", "r2"))
    R = float(spec.geometry.get("head_radius", 1.0))
    rows = []
    for eps, ell, r1, r2 in TABLE52_GRID:
        vals, notes = {}, []
        try:
            g = geometry.build_curved_spine(R, eps, ell, r1, r2)
        except geometry.InvalidGeometry as exc:
            rows.append(ComparisonRow(
                params=(("eps", eps), ("l", ell), ("r1", r1), ("r2", r2)),
                values=(("u", float("nan")), ("u_eps", float("nan"))),
                note=f"geometry: {exc}"))
            continue
        center = g.head.center
        _run_engine(vals, notes, "u_eps",
                    lambda: _formula_at(g, center).value)
        hs_full = _h_ladder(spec.h_list, eps, _domain_area(g))
        _run_engine(vals, notes, "u",
                    lambda: fem.refine_and_extrapolate(
                        g, "escape", center, hs_full)["extrapolated"])
        if "robin_fem" in spec.engines:
            gh, p = _robin_head(g)
            hs_head = _h_ladder(spec.h_list, eps, gh.head.area)
            _run_engine(vals, notes, "u_r",
                        lambda: fem.refine_and_extrapolate(
                            gh, "robin", center, hs_head,
                            alpha=p.alpha, beta=p.beta)["extrapolated"])
        if "mc" in spec.engines:
            cfg = _mc_config(spec, g, center, _mean_guess(g))
            est = montecarlo.simulate_mfpt(g, cfg)
            vals["mc"] = est.mean
            vals["mc_stderr"] = est.stderr
        key = tuple(round(v, 9) for v in (eps, ell, r1, r2))
        if key in ref:
            r = ref[key]
            note = _diff_note(r["d_ueps_u_printed"], r["u_eps"] - r["u"],
                              "u_eps-u")
            if note:
                notes.append(note)
        rows.append(ComparisonRow(
            params=(("eps", eps), ("l", ell), ("r1", r1), ("r2", r2)),
            values=tuple(vals.items()), note="; ".join(notes)))
    return rows


# -- CSV ----------------------------------------------------------------------


def _fmt(x, precision: int) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.{precision}g}"
    return str(x)


def _meta_lines(spec: RunSpec, extra: dict | None = None) -> list:
    cfg = {
        "mode": spec.mode,
        "engines": ",".join(spec.engines),
        "h_list": ",".join(f"{h:g}" for h in spec.h_list),
        "dt": f"{spec.dt:g}",
        "walkers": spec.walkers,
        "seed": spec.seed,
        "grid": spec.grid,
        "precision": spec.precision,
    }
    for k, v in sorted((spec.geometry or {}).items()):
        cfg[f"geometry.{k}"] = v
    for k, v in sorted((extra or {}).items()):
        cfg[k] = v
    lines = [f"# spinemfpt {__version__}"]
    if spec.timestamp:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        lines.append(f"# generated: {stamp}")
    lines.append("# config: " + " ".join(f"{k}={v}" for k, v in cfg.items()))
    return lines


def _derived_columns(rows) -> list:
    """Difference columns recomputed from the row values at output time."""
    have = {k for row in rows for k, _ in row.values}
    cols = []
    if {"u_eps", "u_r"} <= have:
        cols.append(("d_ueps_ur", lambda r: r.difference("u_eps", "u_r")))
    if {"u", "u_eps"} <= have:
        cols.append(("d_u_ueps", lambda r: r.difference("u", "u_eps")))
    if {"mc", "u"} <= have:
        cols.append(("d_mc_u", lambda r: r.difference("mc", "u")))
    cols.append(("o_eps", lambda r: r.param("eps")))
    return cols


def _reference_columns(rows, name: str) -> list:
    """ref_*/err_* columns for every engine column the reference table has."""
    try:
        ref_rows = load_reference(name)
    except FileNotFoundError:
        return []
    keys = [k for k, _ in rows[0].params]
    index = _ref_index(ref_rows, keys)

    def lookup(row):
        return index.get(tuple(round(row.param(k), 9) for k in keys))

    cols = []
    have = {k for row in rows for k, _ in row.values}
    for col in ("u_r", "u_eps", "u"):
        if col not in have or col not in ref_rows[0]:
            continue
        cols.append((f"ref_{col}", lambda r, c=col: (
            lookup(r)[c] if lookup(r) else float("nan"))))
        cols.append((f"err_{col}", lambda r, c=col: (
            r.value(c) - lookup(r)[c] if lookup(r) else float("nan"))))
    return cols


def rows_to_csv(rows, path_or_buf, spec: RunSpec, reference: str | None = None
                ) -> None:
    """Write comparison rows: params, engine values, recomputed differences,
    published reference values and deviations, and the note column."""
    if not rows:
        raise ValueError("no rows to write")
    derived = _derived_columns(rows)
    if reference:
        derived += _reference_columns(rows, reference)
    pnames = [k for k, _ in rows[0].params]
    vnames = [k for k, _ in rows[0].values]
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf,
                                                           "__fspath__")
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        for line in _meta_lines(spec):
            f.write(line + "\n")
        f.write("# params: " + ",".join(pnames) + "\n")
        f.write(",".join(pnames + vnames + [c for c, _ in derived]
                         + ["note"]) + "\n")
        for row in rows:
            cells = [_fmt(v, spec.precision) for _, v in row.params]
            cells += [_fmt(v, spec.precision) for _, v in row.values]
            cells += [_fmt(fn(row), spec.precision) for _, fn in derived]
            cells.append('"%s"' % row.note.replace('"', "'"))
            f.write(",".join(cells) + "\n")
    finally:
        if own:
            f.close()


def _is_derived(col: str) -> bool:
    return col.startswith(("d_", "ref_", "err_")) or col == "o_eps"


def rows_from_csv(path) -> list:
    """Read comparison rows back; derived columns are dropped (they are
    recomputable), params are identified by the '# params:' metadata."""
    with open(path) as f:
        lines = f.readlines()
    pnames = []
    body = []
    for ln in lines:
        if ln.startswith("# params:"):
            pnames = ln.split(":", 1)[1].strip().split(",")
        elif not ln.startswith("#"):
            body.append(ln)
    rows = []
    for rec in csv.DictReader(body):
        params = tuple((k, float(rec[k])) for k in pnames)
        values = tuple(
            (k, float(v)) for k, v in rec.items()
            if k not in pnames and k != "note" and not _is_derived(k))
        rows.append(ComparisonRow(params=params, values=values,
                                  note=rec.get("note", "")))
    return rows


def format_rows(rows, spec: RunSpec, reference: str | None = None) -> str:
    """Fixed-width text rendering of a table run."""
    buf = io.StringIO()
    spec_txt = replace(spec, timestamp=False)
    rows_to_csv(rows, buf, spec_txt, reference=reference)
    lines = [ln for ln in buf.getvalue().splitlines()
             if not ln.startswith("#")]
    cells = [next(csv.reader([ln])) for ln in lines]
    widths = [max(len(row[i]) for row in cells)
              for i in range(len(cells[0]))]
    return "\n".join(
        "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
        for row in cells)


# -- fields -------------------------------------------------------------------


def _grid_points(g, n: int):
    pts = g.loop()
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    xs = np.linspace(xmin, xmax, n)
    ys = np.linspace(ymin, ymax, n)
    inside = []
    for y in ys:
        for x in xs:
            if g.locate((x, y))[0] == "interior":
                inside.append((float(x), float(y)))
    if not inside:
        raise EmptyGrid(f"no interior points on a {n}x{n} grid over "
                        f"[{xmin:g},{xmax:g}]x[{ymin:g},{ymax:g}]")
    return inside


def _window_center(g):
    if g.mode == "neck_only":
        return np.array([g.neck.length, 0.0])
    return np.asarray(g.gamma_center, dtype=float)


def _field_csv(path, spec, pts, columns, star, eps, label):
    with open(path, "w") as f:
        for line in _meta_lines(spec, {"layer": label}):
            f.write(line + "\n")
        names = [name for name, _ in columns]
        f.write(",".join(["x", "y"] + names + ["mask"]) + "\n")
        for i, (x, y) in enumerate(pts):
            mask = int(math.hypot(x - star[0], y - star[1]) < 5.0 * eps)
            cells = [_fmt(float(x), spec.precision),
                     _fmt(float(y), spec.precision)]
            cells += [_fmt(float(col[i]), spec.precision) for _, col in columns]
            cells.append(str(mask))
            f.write(",".join(cells) + "\n")


def run_field(spec: RunSpec) -> dict:
    """Sample engines on a common interior grid and write CSV files.

    The formula engine is evaluated only inside the head (nan
    elsewhere); fem and mc cover the whole domain.  Each selected engine
    writes <out>_<engine>.csv and each engine pair with overlapping
    values writes <out>_diff_<a>_<b>.csv; a mask column flags points
    within 5 eps of the window.  Returns {engine: path}.
    """
    allowed = {"formula", "fem", "mc"}
    bad = [e for e in spec.engines if e not in allowed]
    if bad:
        raise ConfigError(f"field mode supports engines "
                          f"{sorted(allowed)}, got {bad}")
    if spec.out is None:
        raise ConfigError("field mode needs --out (used as a file prefix)")
    g = geometry.geometry_from_config(dict(spec.geometry)) \
        if spec.geometry else geometry.build_straight_spine(1.0, 0.1, 1.0)
    pts = _grid_points(g, spec.grid)
    star = _window_center(g)
    values = {}
    if "formula" in spec.engines:
        p = asymptotics.params_from_geometry(g)
        vals = np.full(len(pts), float("nan"))
        cx, cy = g.head.center
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", asymptotics.TooCloseToWindow)
            for i, (x, y) in enumerate(pts):
                if math.hypot(x - cx, y - cy) < g.head.radius:
                    vals[i] = asymptotics.mfpt_spine(p, (x, y)).value \
                        if g.mode == "spine" \
                        else asymptotics.mfpt_neumann_robin(p, (x, y)).value
        values["formula"] = [("value", vals)]
    if "fem" in spec.engines:
        hs = _h_ladder(spec.h_list, g.eps, _domain_area(g))
        mesh = fem.generate_mesh(g, min(hs))
        f_ = fem.solve_escape(mesh)
        values["fem"] = [("value", fem.evaluate_many(f_, pts))]
    if "mc" in spec.engines:
        cfg = _mc_config(spec, g, np.asarray(pts), _mean_guess(g))
        ests = montecarlo.simulate_field(g, cfg)
        values["mc"] = [
            ("value", np.array([e.mean for _, e in ests])),
            ("stderr", np.array([e.stderr for _, e in ests])),
        ]
    paths = {}
    ordered = [e for e in ENGINES if e in values]
    for eng in ordered:
        path = f"{spec.out}_{eng}.csv"
        _field_csv(path, spec, pts, values[eng], star, g.eps, eng)
        paths[eng] = path
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            va = values[a][0][1]
            vb = values[b][0][1]
            path = f"{spec.out}_diff_{a}_{b}.csv"
            _field_csv(path, spec, pts, [("diff", va - vb)], star, g.eps,
                       f"{a}-{b}")
            paths[f"diff_{a}_{b}"] = path
    return paths


# -- single point ---------------------------------------------------------


def run_single(spec: RunSpec) -> list:
    """Evaluate every selected engine at one point.

    Returns (engine, value, stderr, terms) tuples; the formula engine
    carries its term breakdown (leading, log_term, robin_term,
    phi_term), other engines an empty dict.  Writes CSV when out is set.
    """
    g = geometry.geometry_from_config(dict(spec.geometry)) \
        if spec.geometry else geometry.build_straight_spine(1.0, 0.1, 1.0)
    point = tuple(float(v) for v in spec.point)
    results = []
    for eng in spec.engines:
        stderr = float("nan")
        terms = {}
        try:
            if eng == "formula":
                res = _formula_at(g, point)
                value = res.value
                terms = dict(res.terms)
            elif eng == "fem":
                hs = _h_ladder(spec.h_list, g.eps, _domain_area(g))
                value = fem.refine_and_extrapolate(
                    g, "escape", point, hs)["extrapolated"]
            elif eng == "robin_fem":
                if g.mode == "head_only":
                    gh = g
                    win = next(p for p in g.pieces if p.kind == "robin")
                    alpha, beta = win.alpha, win.beta
                else:
                    gh, p = _robin_head(g)
                    alpha, beta = p.alpha, p.beta
                hs = _h_ladder(spec.h_list, g.eps, gh.head.area)
                value = fem.refine_and_extrapolate(
                    gh, "robin", point, hs,
                    alpha=alpha, beta=beta)["extrapolated"]
            else:
                cfg = _mc_config(spec, g, point, _mean_guess(g))
                est = montecarlo.simulate_mfpt(g, cfg)
                value, stderr = est.mean, est.stderr
            results.append((eng, float(value), stderr, terms, ""))
        except Exception as exc:  # noqa: BLE001 - annotated per engine
            results.append((eng, float("nan"), float("nan"), {},
                            f"{type(exc).__name__}: {exc}"))
    if spec.out:
        term_names = ("leading", "log_term", "robin_term", "phi_term")
        with open(spec.out, "w") as f:
            for line in _meta_lines(spec, {"point": f"{point[0]:g},"
                                                    f"{point[1]:g}"}):
                f.write(line + "\n")
            f.write("engine,value,stderr," + ",".join(term_names)
                    + ",note\n")
            for eng, value, stderr, terms, note in results:
                cells = [eng, _fmt(value, spec.precision),
                         _fmt(stderr, spec.precision)]
                cells += [_fmt(float(terms[t]), spec.precision)
                          if t in terms else "" for t in term_names]
                cells.append('"%s"' % note.replace('"', "'"))
                f.write(",".join(cells) + "\n")
    return results


# -- validation ---------------------------------------------------------------

_EXPECTED = {
    "log_double_integral": 4.0 * math.log(2.0) - 6.0,
    "neck_mean": 0.5,
    "phi_laplacian": -1.0,
}


def _quad_log_L1(t: float) -> float:
    from scipy.integrate import quad

    val, _ = quad(lambda y: math.log(abs(t - y)), -1.0, 1.0,
                  points=[t], limit=200)
    return val


def run_validate(spec: RunSpec, expected: dict | None = None):
    """Cross-engine validation: closed-form identities, solver
    compatibility, and pairwise engine agreement.

    expected overrides the reference constants (a deliberately wrong
    value must make the matching check fail; used to prove the suite
    can fail).  Returns (checks, ok).
    """
    exp = {**_EXPECTED, **(expected or {})}
    checks = []
    skip_fem = "fem" in spec.skip or "robin_fem" in spec.skip
    skip_mc = "mc" in spec.skip

    def add(name, measured, tol, target, detail=""):
        ok = abs(measured) <= tol and not math.isnan(measured)
        checks.append(CheckResult(name, "PASS" if ok else "FAIL",
                                  measured, target, detail))

    def add_skip(name, target):
        checks.append(CheckResult(name, "SKIP", float("nan"), target,
                                  "skipped by request"))

    # closed-form kernel identities against direct quadrature
    from scipy.integrate import quad

    outer, _ = quad(_quad_log_L1, -1.0, 1.0, limit=200)
    add("log kernel double integral", outer - exp["log_double_integral"],
        1e-8, "|quadrature - constant| <= 1e-8")
    rng = np.random.default_rng(12)
    worst = max(abs(asymptotics.log_kernel_L1(t) - _quad_log_L1(t))
                for t in rng.uniform(-0.999, 0.999, 12))
    add("log kernel closed form", worst, 1e-8,
        "max |closed form - quadrature| <= 1e-8")

    # regular part: harmonic defect and numeric agreement
    head = geometry.HeadSpec((0.0, 0.0), 1.0)
    star = (1.0, 0.0)
    h = 1e-4
    worst = 0.0
    for x, y in rng.uniform(-0.55, 0.55, (10, 2)):
        lap = (asymptotics.phi_disk((x + h, y), star, head)
               + asymptotics.phi_disk((x - h, y), star, head)
               + asymptotics.phi_disk((x, y + h), star, head)
               + asymptotics.phi_disk((x, y - h), star, head)
               - 4.0 * asymptotics.phi_disk((x, y), star, head)) / (h * h)
        worst = max(worst, abs(lap - exp["phi_laplacian"]))
    add("regular part harmonic defect", worst, 1e-3,
        "finite differences give the unit source within 1e-3")
    if skip_fem:
        add_skip("regular part numeric vs closed form", "<= 5e-3")
        add_skip("escape flux compatibility", "total = -area within 2%")
        add_skip("robin flux compatibility", "total = -head area within 12%")
        add_skip("fem vs formula, straight neck", "|diff| <= 0.15")
        add_skip("fem vs formula, curved neck", "|diff| <= 0.7")
    else:
        gh = geometry.build_head_only(1.0, 0.1, 1.0, 0.5)
        phi_n = asymptotics.PhiNumeric(gh, h=0.02)
        worst = max(abs(phi_n(q) - asymptotics.phi_disk(q, star, head))
                    for q in [(0.0, 0.0), (-0.5, 0.2), (0.3, -0.4),
                              (0.1, 0.55), (-0.25, -0.45)])
        add("regular part numeric vs closed form", worst, 5e-3,
            "max deviation <= 5e-3 at probe points")

        gn = geometry.build_neck_only(1.0, 0.1)
        fn = fem.solve_escape(fem.generate_mesh(gn, 0.02))
        area = _domain_area(gn)
        rel = (fem.window_flux(fn).total + area) / area
        add("escape flux compatibility", rel, 0.02,
            "window flux integrates to -area within 2%")

        fr = fem.solve_neumann_robin(fem.generate_mesh(gh, 0.02), 1.0, 0.5)
        rel = (fem.window_flux(fr).total + gh.head.area) / gh.head.area
        add("robin flux compatibility", rel, 0.12,
            "window flux integrates to -head area within 12%")

        g1 = geometry.build_straight_spine(1.0, 0.1, 1.0)
        hs = _h_ladder(spec.h_list, 0.1, _domain_area(g1))
        u_fem = fem.refine_and_extrapolate(
            g1, "escape", g1.head.center, hs)["extrapolated"]
        u_formula = _formula_at(g1, g1.head.center).value
        add("fem vs formula, straight neck", u_fem - u_formula, 0.15,
            "|extrapolated fem - closed form| <= 0.15")

        g2 = geometry.build_curved_spine(1.0, 0.1, 1.0, 0.7, 0.9)
        hs = _h_ladder(spec.h_list, 0.1, _domain_area(g2))
        u_fem2 = fem.refine_and_extrapolate(
            g2, "escape", g2.head.center, hs)["extrapolated"]
        u_formula2 = _formula_at(g2, g2.head.center).value
        add("fem vs formula, curved neck", u_fem2 - u_formula2, 0.7,
            "|extrapolated fem - closed form| <= 0.7")

    if skip_mc:
        add_skip("mc pure neck benchmark", "mean = 0.5 within 3 stderr")
        add_skip("mc vs fem, straight spine", "|diff| <= 3 stderr + 0.1")
    else:
        gn = geometry.build_neck_only(1.0, 0.1)
        n = max(spec.walkers, 2000)
        cfg = montecarlo.WalkConfig(
            dt=spec.dt, walkers=n, seed=spec.seed, start=(0.0, 0.0),
            max_steps=spec.max_steps or int(25.0 * 0.5 / spec.dt) + 1)
        est = montecarlo.simulate_mfpt(gn, cfg)
        tol = 3.0 * est.stderr
        add("mc pure neck benchmark", est.mean - exp["neck_mean"], tol,
            f"|mean - {exp['neck_mean']:g}| <= 3 stderr",
            detail=f"stderr {est.stderr:.2g}, censored {est.n_censored}")
        if est.stderr > 0.02 * exp["neck_mean"]:
            checks.append(CheckResult(
                "mc pure neck precision", "FAIL", est.stderr,
                "stderr <= 2% of the mean"))
        else:
            checks.append(CheckResult(
                "mc pure neck precision", "PASS", est.stderr,
                "stderr <= 2% of the mean"))
        if skip_fem:
            add_skip("mc vs fem, straight spine", "|diff| <= 3 stderr + 0.1")
        else:
            g1 = geometry.build_straight_spine(1.0, 0.1, 1.0)
            hs = _h_ladder(spec.h_list, 0.1, _domain_area(g1))[:2]
            u_fem = fem.refine_and_extrapolate(
                g1, "escape", g1.head.center, hs)["extrapolated"]
            cfg = _mc_config(spec, g1, g1.head.center, _mean_guess(g1))
            est = montecarlo.simulate_mfpt(g1, cfg)
            tol = 3.0 * est.stderr + 0.1
            add("mc vs fem, straight spine", est.mean - u_fem, tol,
                "|mc - fem| <= 3 stderr + 0.1",
                detail=f"mc {est.mean:.4f} +- {est.stderr:.4f}, "
                       f"fem {u_fem:.4f}")

    ok = all(c.status != "FAIL" for c in checks)
    return checks, ok

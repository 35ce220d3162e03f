"""Command-line entry point: ``freebound <subcommand> --metric ... [--R-geodesic R | --S-chart S]``.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage error (including a
radius beyond the admissible one without ``--force``), 3 numeric failure.
"""

import argparse
import hashlib
import math
import io
import re
import sys
from dataclasses import asdict, dataclass, fields as dc_fields
from pathlib import Path

import numpy as np

from . import audit, fields, mesh as meshmod, threshold
from .errors import DomainError, MeshError, NumericError, SingularityError
from .radial import RadialGeometry, build_chart
from .warp import check_admissibility, curvature_K, resolve_metric

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST = "manifest.txt"
SNAP_REL = 1e-4
# R_bar comes from bisection on a grid; radii this close above it count as admissible
ADMISSIBLE_REL = 1e-8


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    metric: str
    R_geodesic: float | None = None
    S_chart: float | None = None
    radius_input: str | None = None
    seed: int = 0
    samples: int = 100_000
    oracle_samples: int | None = None
    tangency_samples: int = 1000
    resolution: int = 58
    shape: str = "perturbed-disk"
    amplitude: float | None = None
    max_iter: int = 200
    grad_tol: float = 1e-9
    eps_edges: float = 5.0
    points: int = 201
    grid_n: int = 2000
    threads: int = 1
    force: bool = False
    output_dir: str | None = None
    csv: str | None = None
    mesh: str | None = None
    run_dir: str | None = None


# -- radius parsing -------------------------------------------------------------

_PI_FORM = re.compile(r"^\s*(?:(\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_radius(text):
    """A decimal, or a multiple of pi such as ``pi/2`` or ``2pi/3``."""
    m = _PI_FORM.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"cannot parse radius {text!r}") from None


def _decimals(text):
    m = re.fullmatch(r"\s*\d*\.(\d+)\s*", text)
    return len(m.group(1)) if m else None


def snap_to_admissible(text, value, R_bar):
    """A decimal just above R_bar that equals R_bar rounded to its own digits means R_bar.

    "Just above" is within SNAP_REL of R_bar, so ``1.5708`` reads as pi/2 on the
    sphere while ``1.6`` does not.
    """
    d = _decimals(text)
    if d is None or not math.isfinite(R_bar) or value <= R_bar:
        return value, False
    if round(R_bar, d) == value and value - R_bar <= SNAP_REL * R_bar:
        return R_bar, True
    return value, False


# -- output helpers -------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return "none"
    return str(v)


class Report:
    """Key-value report; everything but the timing-free content is deterministic."""

    def __init__(self, cfg: RunConfig):
        self.lines = [f"# freebound {cfg.command}"]
        for f in dc_fields(cfg):
            if f.name != "command":
                self.lines.append(f"# {f.name} = {_fmt(getattr(cfg, f.name))}")
        # artifact headers leave out knobs that must not change the numbers
        self.artifact_header = [f"freebound {cfg.command}"] + [
            f"{f.name} = {_fmt(getattr(cfg, f.name))}" for f in dc_fields(cfg)
            if f.name not in ("command", "threads", "output_dir", "csv", "run_dir")]
        self.checks = []

    def kv(self, key, value):
        self.lines.append(f"{key} = {_fmt(value)}")

    def block(self, prefix, obj):
        items = asdict(obj) if hasattr(obj, "__dataclass_fields__") else dict(obj)
        for k, v in items.items():
            if v is None and k == "per_sample" or isinstance(v, (list, np.ndarray)):
                continue
            self.kv(f"{prefix}{k}", v)

    def check(self, name, ok, detail=""):
        ok = bool(ok)
        self.checks.append(ok)
        self.lines.append(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))

    @property
    def passed(self):
        return all(self.checks)

    def text(self):
        return "\n".join(self.lines) + "\n"


def _write_artifacts(out_dir, files):
    """Write {name: text} into out_dir and a manifest of sha256 digests."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digests = []
    for name in sorted(files):
        data = files[name].encode()
        (out / name).write_bytes(data)
        digests.append(f"{hashlib.sha256(data).hexdigest()}  {name}")
    (out / MANIFEST).write_text("\n".join(digests) + "\n")


def _csv_text(columns, rows, header_lines=()):
    lines = [f"# {h}" for h in header_lines] + [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


# -- shared setup -----------------------------------------------------------------


def _setup(cfg: RunConfig, need_radius=True, check_admissible=False):
    try:
        profile = resolve_metric(cfg.metric)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    geom = RadialGeometry(profile)
    chart = build_chart(profile)
    if not need_radius:
        return profile, geom, chart, None
    if cfg.R_geodesic is None and cfg.S_chart is None:
        raise UsageError("give exactly one of --R-geodesic (alias --R) or --S-chart")
    R_bar = None
    if check_admissible:
        R_bar = threshold.find_R_bar(geom, grid_n=cfg.grid_n, chart=chart).R_bar
    if cfg.R_geodesic is not None:
        R = cfg.R_geodesic
        if cfg.radius_input is not None and R_bar is not None:
            R, _ = snap_to_admissible(cfg.radius_input, R, R_bar)
        if not 0 < R < profile.r_max:
            raise UsageError(f"R = {R} outside (0, {profile.r_max})")
        S = chart.s_radius(R)
    else:
        S = cfg.S_chart
        if not 0 < S < chart.s_max:
            raise UsageError(f"S = {S} outside (0, {chart.s_max})")
        R = float(chart.r_of_s(S))
    cfg.R_geodesic, cfg.S_chart = float(R), float(S)
    if check_admissible and R > R_bar * (1 + ADMISSIBLE_REL) and not cfg.force:
        raise UsageError(f"R = {R!r} exceeds the admissible radius R_bar = {R_bar!r}; "
                         "the calibration bound is not established there (use --force to run anyway)")
    return profile, geom, chart, R_bar


# -- subcommands ----------------------------------------------------------------

METRIC_COLUMNS = ("r", "s", "h", "dh", "d2h", "K", "I", "phi", "J", "rho", "disk_area")


def cmd_metric(cfg: RunConfig):
    profile, geom, chart, _ = _setup(cfg, need_radius=cfg.R_geodesic is not None or cfg.S_chart is not None)
    top = cfg.R_geodesic if cfg.R_geodesic is not None else (
        profile.r_max * (1 - 1e-6) if math.isfinite(profile.r_max) else 10.0)
    r = np.linspace(0.0, top, cfg.points)
    s = np.asarray(chart.s_of_r(r))
    cols = [r, s, profile.h(r), profile.dh(r), profile.d2h(r), curvature_K(profile, r),
            geom.I(r), geom.phi(r), geom.J(r), chart.rho(s), 2 * math.pi * np.asarray(geom.I(r))]
    rows = np.column_stack([np.broadcast_to(np.asarray(c, dtype=float), r.shape) for c in cols])
    adm = check_admissibility(profile, r[r > 0] if len(r) > 1 else [0.0])
    rep = Report(cfg)
    rep.kv("profile", profile.name)
    rep.kv("r_max", profile.r_max)
    rep.kv("s_max", chart.s_max)
    rep.kv("min_K", adm.min_K)
    rep.kv("degenerate", adm.degenerate)
    rep.check("origin conditions h(0) = 0, h'(0) = 1, h''(0) = 0", adm.c1_ok)
    rep.check("K > 0 on the grid", adm.c2_ok or adm.degenerate,
              "flat metric: K vanishes identically" if adm.degenerate else "")
    csv = _csv_text(METRIC_COLUMNS, rows, rep.artifact_header)
    return rep, {"metric.csv": csv}, csv


def cmd_threshold(cfg: RunConfig):
    profile, geom, chart, _ = _setup(cfg, need_radius=False)
    t = threshold.find_R_bar(geom, grid_n=cfg.grid_n, chart=chart)
    rep = Report(cfg)
    rep.block("", t)
    if t.identically_zero:
        rep.check("(*) identically zero", True, "every radius is admissible")
    else:
        rep.check("certificate below R_bar", t.certificate_below <= 0, _fmt(t.certificate_below))
        if t.certificate_above is not None:
            rep.check("certificate above R_bar", t.certificate_above > 0, _fmt(t.certificate_above))
    if profile.name == "gaussian-shrinker":
        x = threshold.gaussian_cross_check(t)
        rep.kv("reference_root", x.reference_root)
        rep.kv("reference_root_quoted", threshold.GAUSSIAN_ROOT_PAPER)
        rep.kv("reference_root_as_chart_radius", x.reference_root_as_chart_radius)
        rep.kv("scalar_curvature_sign_change_s", threshold.scalar_curvature_sign_change(chart))
        rep.check("reference root within 1e-3 of 1.546",
                  abs(x.reference_root - threshold.GAUSSIAN_ROOT_PAPER) <= 1e-3)
        rep.check("solver S_bar equals sqrt(2) * reference root",
                  abs(x.solver_S_chart - x.reference_root_as_chart_radius) <= 1e-6)
    return rep, {}, None


def cmd_field_check(cfg: RunConfig):
    profile, geom, chart, R_bar = _setup(cfg, check_admissible=True)
    dim = 3
    y = np.zeros(dim)
    y[0] = cfg.S_chart
    field = fields.conformal_W(geom, chart, cfg.R_geodesic, y)
    summary = fields.field_check(field, cfg.samples, seed=cfg.seed, oracle_samples=cfg.oracle_samples,
                                 tangency_samples=cfg.tangency_samples, threads=cfg.threads,
                                 keep_samples=cfg.csv is not None or cfg.output_dir is not None)
    flux = fields.singular_flux_check(field, [1e-3])[0][1]
    rep = Report(cfg)
    rep.kv("R_bar", R_bar)
    rep.block("", summary)
    rep.kv("singular_flux_ratio_eps_1e-3", flux)
    rep.check("max div <= 1 + 1e-9", summary.max_div <= 1 + 1e-9, _fmt(summary.max_div))
    rep.check("tangency residual <= 1e-10", summary.max_tangency_residual <= 1e-10,
              _fmt(summary.max_tangency_residual))
    if summary.oracle_samples:
        rep.check("oracle relative error <= 1e-6", summary.oracle_max_rel_err <= 1e-6,
                  _fmt(summary.oracle_max_rel_err))
    rep.check("singular flux ratio within 1% of 1", abs(flux - 1) <= 0.01, _fmt(flux))
    files, csv = {}, None
    if summary.per_sample is not None:
        csv = _csv_text(("x1", "x2", "x3", "div", "div_minus_bound_form"), summary.per_sample,
                        rep.artifact_header)
        files["samples.csv"] = csv
    return rep, files, csv


def _solve(cfg: RunConfig, chart, trace=False):
    m0 = meshmod.make_mesh(cfg.shape, cfg.S_chart, cfg.resolution, seed=cfg.seed, amplitude=cfg.amplitude)
    opts = meshmod.SolveOptions(max_iter=cfg.max_iter, grad_tol=cfg.grad_tol)
    m, report = meshmod.minimize(m0, chart, opts)
    if trace:
        for k, a in enumerate(report.history):
            print(f"iter {k} area_g {a!r}", file=sys.stderr)
    return m0, m, report


def _obj_text(m):
    buf = io.StringIO()
    meshmod.write_obj_stream(m, buf)
    return buf.getvalue()


def cmd_solve(cfg: RunConfig, trace=False):
    profile, geom, chart, _ = _setup(cfg)
    m0, m, report = _solve(cfg, chart, trace)
    rep = Report(cfg)
    _solve_block(rep, cfg, profile, geom, chart, m0, m, report)
    hist = _csv_text(("iteration", "area_g"), [(k, a) for k, a in enumerate(report.history)])
    files = {"mesh.obj": _obj_text(m), "history.csv": hist}
    return rep, files, hist


def _solve_block(rep, cfg, profile, geom, chart, m0, m, report):
    rep.kv("triangles", len(m.triangles))
    rep.kv("vertices", len(m.vertices))
    rep.block("", report)
    rep.kv("boundary_geodesic_curvature", meshmod.boundary_geodesic_curvature(m, chart))
    rep.kv("gauss_bonnet_defect", meshmod.gauss_bonnet_defect(m, chart))
    rep.kv("alignment_fraction_initial", audit.equality_alignment(m0))
    rep.kv("alignment_fraction", audit.equality_alignment(m))
    rep.check("solver converged", report.converged, f"residual {_fmt(report.gradient_residual)}")
    b = audit.area_bound_report(m, geom, cfg.R_geodesic, chart)
    rep.check("area_g >= 2 pi I(R) - 1%", b.passed, f"gap_rel {_fmt(b.gap_rel)}")
    if profile.name == "sphere" and cfg.R_geodesic <= math.pi / 2 + 1e-12:
        iso = audit.isoperimetric_check(m, chart, cfg.R_geodesic)
        rep.kv("isoperimetric_rhs", iso.rhs)
        rep.check("area_g >= tan(R/2) length_g", iso.passed, f"slack {_fmt(iso.slack)}")


def cmd_verify(cfg: RunConfig, trace=False):
    profile, geom, chart, R_bar = _setup(cfg, check_admissible=True)
    rep = Report(cfg)
    rep.kv("R_bar", R_bar)
    files = {}
    if cfg.mesh:
        m = meshmod.read_obj(cfg.mesh)
        if abs(m.S - cfg.S_chart) > 1e-9 * max(1.0, m.S):
            raise UsageError(f"mesh radius S = {m.S} does not match S = {cfg.S_chart}")
        m0 = m
        report = meshmod.SolveReport(meshmod.area_g(m, chart), meshmod.boundary_length_g(m, chart),
                                     float(geom.disk_area(cfg.R_geodesic)), 0.0,
                                     meshmod.orthogonality_defect(m, chart), math.nan, 0, True)
        report.gap = report.area_g - report.bound
    else:
        m0, m, report = _solve(cfg, chart, trace)
        files["mesh.obj"] = _obj_text(m)
    _solve_block(rep, cfg, profile, geom, chart, m0, m, report)
    field = audit.boundary_vertex_field(m, geom, chart)
    eps = audit.eps_for_edges(m, field, cfg.eps_edges)
    rec = audit.calibration_audit(m, field, eps)
    rep.block("audit_", rec)
    tol = 0.01 * rec.area_g
    rep.check("div_integral <= area (div <= 1)", rec.slack_div >= -1e-9 * rec.area_g, _fmt(rec.slack_div))
    rep.check("divergence theorem residual <= 1% of area", abs(rec.residual) <= tol, _fmt(rec.residual))
    rep.check("boundary flux ~ 0 (within 1% of area)", abs(rec.boundary_flux) <= tol, _fmt(rec.boundary_flux))
    rep.check("singular flux within 2% of 2 pi I(R)", abs(rec.slack_singular) <= 0.02 * rec.bound,
              _fmt(rec.singular_flux))
    rep.check("chain area >= div >= fluxes", rec.chain_holds())
    return rep, files, None


def cmd_export(cfg: RunConfig):
    """Re-emit the artifacts of a run directory after checking its manifest."""
    src = Path(cfg.run_dir)
    manifest = src / MANIFEST
    if not manifest.exists():
        raise UsageError(f"{src} has no {MANIFEST}")
    rep = Report(cfg)
    files = {}
    for line in manifest.read_text().splitlines():
        digest, name = line.split(None, 1)
        data = (src / name).read_bytes()
        ok = hashlib.sha256(data).hexdigest() == digest
        rep.check(f"{name} matches manifest", ok)
        if ok and name.endswith(".obj"):
            text = _obj_text(meshmod.read_obj(src / name))
            rep.check(f"{name} round trip is byte-identical", text.encode() == data)
        else:
            text = data.decode()
        files[name] = text
    return rep, files, None


# -- argument parsing ---------------------------------------------------------------

HELP_EPILOG = {
    "metric": "CSV columns: " + ", ".join(METRIC_COLUMNS) + " (geodesic radius r, chart radius s, "
              "warping function and derivatives, curvature K = -h''/h, I = int h, phi = I/h, "
              "J = 2 int I h'', conformal factor rho, disk area 2 pi I).",
    "field-check": "CSV columns: x1, x2, x3 (chart point), div (tangential divergence of W), "
                   "div_minus_bound_form.",
    "solve": "Writes mesh.obj and history.csv (columns: iteration, area_g) to --output-dir.",
    "verify": "Runs a solve (or reads --mesh) and audits the divergence-theorem chain.",
    "export": "Re-emits the artifacts listed in a run directory's manifest.",
    "threshold": "Reports the admissible radius R_bar; no CSV output.",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="freebound", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, radius=True):
        p.add_argument("--metric", required=True,
                       help="preset (euclidean, sphere, gaussian-shrinker), metric config or CSV table")
        if radius:
            g = p.add_mutually_exclusive_group()
            g.add_argument("--R-geodesic", "--R", dest="R_geodesic", metavar="R",
                           help="geodesic radius; accepts decimals or forms like pi/2")
            g.add_argument("--S-chart", dest="S_chart", metavar="S", help="chart radius")
        p.add_argument("--output-dir", help="directory for report.txt, artifacts and manifest")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default from FREEBOUND_THREADS, else 1)")
        p.add_argument("--grid-n", type=int, default=2000, help="grid for the admissibility search")

    for name in ("metric", "threshold", "field-check", "solve", "verify", "export"):
        p = sub.add_parser(name, epilog=HELP_EPILOG[name])
        if name == "export":
            p.add_argument("--run-dir", required=True, help="directory written by a previous run")
            p.add_argument("--output-dir", required=True)
            continue
        common(p, radius=name != "threshold")
        if name == "metric":
            p.add_argument("--points", type=int, default=201, help="rows of the table")
        if name in ("metric", "field-check"):
            p.add_argument("--csv", help="also write the table to this path ('-' for stdout)")
        if name == "field-check":
            p.add_argument("--samples", type=int, default=100_000)
            p.add_argument("--oracle-samples", type=int, default=None,
                           help="finite-difference oracle samples (default: --samples)")
            p.add_argument("--tangency-samples", type=int, default=1000)
            p.add_argument("--seed", type=int, default=0)
        if name in ("field-check", "verify"):
            p.add_argument("--force", action="store_true", help="run beyond the admissible radius")
        if name in ("solve", "verify"):
            p.add_argument("--shape", default="perturbed-disk", choices=meshmod.SHAPES)
            p.add_argument("--resolution", type=int, default=58, help="rings of the disk mesh (6 n^2 triangles)")
            p.add_argument("--amplitude", type=float, default=None)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--max-iter", type=int, default=200)
            p.add_argument("--grad-tol", type=float, default=1e-9)
            p.add_argument("--trace", action="store_true", help="print the area per iteration to stderr")
        if name == "verify":
            p.add_argument("--mesh", help="audit this OBJ instead of solving")
            p.add_argument("--eps-edges", type=float, default=5.0,
                           help="excision radius in boundary edge lengths (at least 5)")
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig(command=args.command, metric=getattr(args, "metric", ""))
    for f in dc_fields(cfg):
        if f.name in ("command", "metric", "R_geodesic", "S_chart", "radius_input"):
            continue
        key = f.name
        if hasattr(args, key) and getattr(args, key) is not None:
            setattr(cfg, key, getattr(args, key))
    cfg.threads = getattr(args, "threads", None) or fields.default_threads()
    R_text = getattr(args, "R_geodesic", None)
    S_text = getattr(args, "S_chart", None)
    if R_text is not None:
        cfg.R_geodesic = parse_radius(R_text)
        cfg.radius_input = R_text
    if S_text is not None:
        cfg.S_chart = parse_radius(S_text)
    return cfg


COMMANDS = {
    "metric": cmd_metric,
    "threshold": cmd_threshold,
    "field-check": cmd_field_check,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "export": cmd_export,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        handler = COMMANDS[cfg.command]
        if cfg.command in ("solve", "verify"):
            rep, files, table = handler(cfg, trace=args.trace)
        else:
            rep, files, table = handler(cfg)
    except UsageError as exc:
        print(f"freebound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, MeshError, SingularityError, FloatingPointError) as exc:
        print(f"freebound: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"freebound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = rep.text()
    sys.stdout.write(text)
    csv_path = getattr(args, "csv", None)
    if csv_path and table is not None:
        if csv_path == "-":
            sys.stdout.write(table)
        else:
            Path(csv_path).write_text(table)
    if cfg.output_dir:
        report_name = "export_report.txt" if cfg.command == "export" else "report.txt"
        _write_artifacts(cfg.output_dir, {report_name: text, **files})
    return EXIT_PASS if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end runs: generate, solve, extract, classify, diagnose, export.

A run writes every artifact into one output directory: the two measures,
the coupling and dual potentials, the extracted map pair with region
labels, inverse maps, regularity reports, structural-condition reports,
and a pass/fail check table. All artifacts are byte-stable for a fixed
seed. Exit codes: 0 success, 1 configuration, 2 invariant violation,
3 solver failure, 4 I/O failure.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import maps as maps_mod
from . import measures as measures_mod
from . import mtw as mtw_mod
from . import regularity as reg_mod
from . import solver as solver_mod
from .errors import ConfigError, InsufficientDataError, SphereOTError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_SOLVER = 3
EXIT_IO = 4

CAP_POWER = 16
BAND_POWER = 4


@dataclass
class RunConfig:
    """Parameters of one pipeline run; tolerances default from the mesh."""

    n: int = 2
    mesh_count: int = 200
    seed: int = 0
    solver: str = "exact"
    reg: float = 0.01
    epsilon_suitable: float | None = None
    merge_tol: float | None = None
    zero_tol: float | None = None
    output_dir: Path = Path("run")

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError("sphere dimension must be >= 1")
        if self.mesh_count < self.n + 2:
            raise ConfigError(f"mesh_count must be at least {self.n + 2}")
        if self.solver not in ("exact", "entropic"):
            raise ConfigError("solver must be 'exact' or 'entropic'")
        if self.solver == "entropic" and self.reg <= 0:
            raise ConfigError("entropic regularization must be positive")
        for name in ("epsilon_suitable", "merge_tol", "zero_tol"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive")


def builtin_density(spec: str, n: int):
    """Density factory: 'uniform', 'cap:kappa', or 'band:kappa'.

    cap concentrates at the last coordinate axis with a strictly positive
    floor 1 - kappa; band concentrates around the corresponding equator.
    Both have unit mean against the surface measure on S^2.
    """
    if spec == "uniform":
        return lambda p: 1.0
    kind, _, arg = spec.partition(":")
    try:
        kappa = float(arg)
    except ValueError:
        raise ConfigError(f"malformed density spec {spec!r}") from None
    if not 0.0 < kappa < 1.0:
        raise ConfigError("density concentration must lie in (0, 1)")
    if kind == "cap":
        gain = CAP_POWER + 1.0
        return lambda p: (1.0 - kappa) + kappa * gain * ((1.0 + p[-1]) / 2.0) ** CAP_POWER
    if kind == "band":
        gain = 315.0 / 128.0  # unit mean of (1 - z^2)^4 on S^2
        return lambda p: (1.0 - kappa) + kappa * gain * (1.0 - p[-1] ** 2) ** BAND_POWER
    raise ConfigError(f"unknown density spec {spec!r}")


def resolve_measure(spec: str, mesh: measures_mod.SphereMesh) -> measures_mod.DiscreteMeasure:
    """A measure from a density spec or a measure JSON file path."""
    if spec == "uniform" or spec.partition(":")[0] in ("cap", "band"):
        return measures_mod.sample_density(builtin_density(spec, mesh.n), mesh)
    path = Path(spec)
    if path.exists():
        return measures_mod.load_measure(path)
    raise ConfigError(f"measure spec {spec!r} is neither a built-in density nor a file")


@dataclass
class Check:
    """One line of the pass/fail table."""

    name: str
    claim: str
    passed: bool
    value: float
    tolerance: float
    required: bool = True

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "claim": self.claim,
            "passed": bool(self.passed),
            "value": None if self.value is None or math.isnan(self.value) else float(self.value),
            "tolerance": float(self.tolerance),
            "required": bool(self.required),
        }


@dataclass
class RunResult:
    exit_code: int
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    output_dir: Path | None = None

    def failed_required(self) -> list:
        return [c for c in self.checks if c.required and not c.passed]


def _json_dump(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)


def _holder_reports(mm, window):
    """Envelope fits per region, skipping regions with too little data."""
    reports = {}
    dot_plus = np.einsum("ij,ij->i", mm.source_points, mm.t_plus)
    s1 = np.nonzero((mm.region == "S1") & (np.abs(dot_plus) >= 0.2))[0]
    jobs = [
        ("outer_on_S1_interior", s1, mm.t_plus),
        ("outer_on_S2", mm.indices_in("S2"), mm.t_plus),
        ("inner_on_S2", mm.indices_in("S2"), mm.t_minus),
    ]
    for name, idx, values in jobs:
        if len(idx) < 2:
            continue
        try:
            rep = reg_mod.holder_fit(
                mm.source_points[idx], values[idx], window=window, region=name
            )
        except InsufficientDataError:
            continue
        reports[name] = rep
    return reports


def run_pipeline(config: RunConfig, mu_spec: str, nu_spec: str) -> RunResult:
    """Execute the full pipeline and write all artifacts to the output dir."""
    config.validate()
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".writable"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    mesh = measures_mod.quasi_uniform_mesh(config.n, config.mesh_count, config.seed)
    mu = resolve_measure(mu_spec, mesh)
    nu = resolve_measure(nu_spec, mesh)
    epsilon = config.epsilon_suitable or measures_mod.default_epsilon(config.n)
    merge_tol = config.merge_tol or 2.0 * mesh.spacing
    zero_tol = config.zero_tol or mesh.spacing

    checks: list[Check] = []
    certificate = measures_mod.check_suitable(mu, nu, epsilon, symmetric=False)
    checks.append(Check(
        "suitability",
        "source density bounded above by 1/epsilon and target below by epsilon",
        certificate.upper_ok and certificate.lower_ok,
        float(epsilon), 0.0, required=False,
    ))

    if config.solver == "exact":
        coupling, duals = solver_mod.solve_exact(mu, nu)
    else:
        coupling, duals = solver_mod.solve_entropic(mu, nu, reg=config.reg)
    coupling.validate(mu, nu)
    exact = config.solver == "exact"

    row_err = float(np.max(np.abs(coupling.row_marginal(mu.count) - mu.weights)))
    col_err = float(np.max(np.abs(coupling.col_marginal(nu.count) - nu.weights)))
    checks.append(Check(
        "marginals", "coupling marginals match the prescribed weights",
        max(row_err, col_err) <= 1e-8, max(row_err, col_err), 1e-8,
    ))
    if exact:
        gap = coupling.total_cost - float(duals.psi @ mu.weights + duals.phi @ nu.weights)
        checks.append(Check(
            "duality_gap", "primal cost meets the dual value", gap <= 1e-8, gap, 1e-8,
        ))
    cyc = solver_mod.cyclical_monotonicity_violation(coupling, mu, nu)
    checks.append(Check(
        "cyclical_monotonicity", "no two support pairs admit an improving swap",
        cyc <= 1e-9, cyc, 1e-9, required=exact,
    ))

    extraction_input = coupling if exact else solver_mod.truncate_support(coupling, 1e-6)
    mm = maps_mod.extract_multimap(extraction_input, mu, nu, merge_tol)
    mm = maps_mod.classify_regions(mm, zero_tol)
    inv = maps_mod.invert_maps(mm, extraction_input, nu)
    nu1, nu_rest = maps_mod.nu1_split(mm, nu)

    checks.append(Check(
        "region_partition", "every source atom carries exactly one region label",
        bool(np.all(np.isin(mm.region, maps_mod.REGION_SOURCE))), float(mm.count), 0.0,
    ))
    lam_max = float(mm.lam.max()) if mm.count else 0.0
    checks.append(Check(
        "normal_jump_bound", "normal jump lambda stays within the diameter bound 2",
        lam_max <= 2.0 + 1e-9, lam_max, 2.0 + 1e-9,
    ))
    checks.append(Check(
        "bivalent_signs",
        "bivalent atoms have positively aligned outer and negatively aligned inner images",
        not any(a["kind"] == "bivalent sign structure" for a in mm.anomalies),
        float(len(mm.anomalies)), 0.0, required=exact,
    ))
    s2 = mm.indices_in("S2")
    if len(s2):
        collin = float(np.max(mm.residual[s2] / np.maximum(mm.lam[s2], 1e-15)))
        checks.append(Check(
            "collinearity",
            "outer minus inner image is normal to the source up to a tenth of the jump",
            collin <= 0.1, collin, 0.1, required=exact,
        ))
        outer_targets = sorted({int(j) for i in s2 for j in mm.plus_members[i]})
        landing = all(inv.region[j] == "T1" for j in outer_targets)
        checks.append(Check(
            "outer_image_univalent",
            "outer images of bivalent sources land in the univalent target region",
            landing, float(len(outer_targets)), 0.0, required=exact,
        ))
    t2 = inv.indices_in("T2")
    if len(t2) >= 2:
        mono = reg_mod.monotonicity_check(inv, t2)
        checks.append(Check(
            "inverse_monotonicity",
            "inner inverse map is monotone against target displacement",
            mono >= -1e-9, mono, 1e-9, required=exact,
        ))
        beta_ok = True
        for center in t2[: min(len(t2), 8)]:
            try:
                rep = reg_mod.dichotomy_probe(inv, int(center), m=50)
            except SphereOTError:
                continue  # coincident weighted normals: angle undefined there
            beta_ok = beta_ok and rep.gamma_bound_ok
        checks.append(Check(
            "angle_bound",
            "weighted-normal angles stay below half the complementary separation angle",
            beta_ok, float(len(t2)), 1e-9, required=exact,
        ))
    mass_split = abs(nu1.mass + nu_rest.mass - nu.mass)
    checks.append(Check(
        "target_split", "inner-image restriction and remainder partition the target mass",
        mass_split <= 1e-10, mass_split, 1e-10,
    ))

    window = (2.0 * mesh.spacing, max(0.5, 4.0 * mesh.spacing))
    holder = _holder_reports(mm, window)
    constants = None
    bound_ratio = None
    if len(s2) >= 2:
        margins = -np.einsum("ij,ij->i", mm.source_points[s2], mm.t_minus[s2])
        usable = s2[margins > 0]
        if len(usable) >= 2:
            try:
                constants = reg_mod.region_constants(mm, usable, window)
                bound_ratio = reg_mod.t_minus_bound_check(mm, usable, window, constants)
                checks.append(Check(
                    "inner_bound",
                    "inner-map displacements respect the proof-level constant",
                    bound_ratio <= 1.0, bound_ratio, 1.0, required=exact,
                ))
            except InsufficientDataError:
                pass
    injectivity = None
    if len(t2) >= 2:
        try:
            injectivity = reg_mod.injectivity_lower_bound(
                inv, t2, 4.0 * config.n - 1.0
            )
        except InsufficientDataError:
            pass

    # ---- artifacts ----------------------------------------------------
    _json_dump(
        {k: (str(v) if isinstance(v, Path) else v) for k, v in dataclasses.asdict(config).items()},
        out / "config.json",
    )
    measures_mod.save_measure(mu, out / "mu.json")
    measures_mod.save_measure(nu, out / "nu.json")
    solver_mod.save_coupling_csv(coupling, out / "coupling.csv")
    solver_mod.save_duals_json(duals, coupling.total_cost, out / "duals.json")
    maps_mod.save_multimap_json(mm, out / "multimap.json")
    _json_dump(_inverse_records(inv), out / "inverse.json")
    _json_dump(
        {
            "source_regions": mm.region_counts(),
            "target_regions": inv.region_counts(),
            "anomalies": mm.anomalies,
            "nu1_mass": nu1.mass,
            "nu_rest_mass": nu_rest.mass,
        },
        out / "regions.json",
    )
    _json_dump(
        {name: _holder_as_dict(rep) for name, rep in holder.items()},
        out / "holder_reports.json",
    )
    _json_dump(
        {
            "constants": dataclasses.asdict(constants) if constants else None,
            "inner_bound_ratio": bound_ratio,
            "injectivity": dataclasses.asdict(injectivity) if injectivity else None,
        },
        out / "constants.json",
    )
    _write_beta_csv(inv, t2, out / "beta_values.csv")
    _json_dump([c.as_dict() for c in checks], out / "checks.json")

    summary = {
        "total_cost": coupling.total_cost,
        "support_size": coupling.size,
        "source_regions": mm.region_counts(),
        "target_regions": inv.region_counts(),
        "bivalent_fraction": float(len(s2)) / mm.count,
        "checks_failed": [c.name for c in checks if c.required and not c.passed],
        "mesh_spacing": mesh.spacing,
        "merge_tol": merge_tol,
        "zero_tol": zero_tol,
    }
    _json_dump(summary, out / "summary.json")

    code = EXIT_OK if not [c for c in checks if c.required and not c.passed] else EXIT_INVARIANT
    return RunResult(code, checks, summary, out)


def _holder_as_dict(rep) -> dict:
    d = dataclasses.asdict(rep)
    d["scale_window"] = list(rep.scale_window)
    d["fit_points"] = [[float(a), float(b)] for a, b in rep.fit_points]
    return d


def _inverse_records(inv) -> dict:
    return {
        "n": inv.n,
        "atoms": [
            {
                "j": int(j),
                "s_plus": [float(v) for v in inv.s_plus[j]],
                "s_minus": [float(v) for v in inv.s_minus[j]],
                "omega": float(inv.omega[j]),
                "residual": float(inv.residual[j]),
                "region": str(inv.region[j]),
            }
            for j in range(inv.count)
        ],
    }


def _write_beta_csv(inv, t2, path: Path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["center", "other", "beta"])
        for center in t2[: min(len(t2), 8)]:
            try:
                rep = reg_mod.dichotomy_probe(inv, int(center), m=50)
            except SphereOTError:
                continue
            for j, beta in zip(rep.others, rep.betas):
                writer.writerow([int(center), int(j), repr(float(beta))])


def run_mtw_suite(
    n: int,
    out_dir: Path,
    samples: int = 200,
    seed: int = 0,
    h: float = 1e-3,
) -> RunResult:
    """Structural-condition sweep written as a standalone report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n + 1)
    x /= np.linalg.norm(x)
    chart = mtw_mod.Chart(x)
    ys = np.array([
        mtw_mod.chart_lift(chart, 0.8 * rng.uniform(-1, 1, n) / math.sqrt(n))
        for _ in range(12)
    ])
    twist = mtw_mod.twist_margin(x, ys)
    profile = mtw_mod.nondegeneracy_profile(x, np.deg2rad([10, 30, 50, 70, 85]))
    coincidence = abs(float(np.linalg.det(mtw_mod.cross_derivative_frame(x, x, 1e-3))))
    # null direction pairs only exist from dimension 2 on
    curvature = (
        mtw_mod.cross_curvature_suite(n, samples=samples, seed=seed, h=h) if n >= 2 else None
    )
    y0 = mtw_mod.chart_lift(chart, 0.6 * np.eye(n)[0])
    y1 = mtw_mod.chart_lift(chart, -0.5 * np.eye(n)[min(1, n - 1)])
    witness_ok = True
    try:
        mtw_mod.biconvexity_witness(x, y0, y1, 0.37)
    except SphereOTError:
        witness_ok = False

    dets = [d for _, d in profile]
    checks = [
        Check("twist", "gradient image doubles chart separations",
              abs(twist.min_margin - 2.0) <= 1e-10, twist.min_margin, 1e-10),
        Check("nondegeneracy_coincidence", "mixed-derivative determinant is 2^n at coincidence",
              abs(coincidence - 2.0**n) <= 0.01 * 2.0**n, coincidence, 0.01 * 2.0**n),
        Check("nondegeneracy_decay", "determinant decays strictly toward the alignment boundary",
              all(dets[i] > dets[i + 1] for i in range(len(dets) - 1)), dets[-1], 0.0),
        Check("biconvexity", "gradient image of the half-sphere is convex",
              witness_ok, 1.0 if witness_ok else 0.0, 1e-10),
    ]
    if curvature is not None:
        checks.insert(3, Check(
            "cross_curvature_positive", "mixed fourth difference is positive on null pairs",
            curvature.min_margin > 0.0, curvature.min_margin, 0.0,
        ))
    _json_dump(
        {
            "twist": {"ratio": twist.min_margin, "samples": twist.sample_count},
            "nondegeneracy": {"coincidence": coincidence, "profile": profile},
            "cross_curvature": None if curvature is None else {
                "min": curvature.min_margin,
                "samples": [[float(a), float(v)] for a, v in curvature.samples],
            },
            "checks": [c.as_dict() for c in checks],
        },
        out / "mtw_report.json",
    )
    code = EXIT_OK if all(c.passed for c in checks) else EXIT_INVARIANT
    return RunResult(code, checks, {"mtw": "done"}, out)


def export_report(run_dir: Path, fmt: str = "json") -> Path:
    """Aggregate a run directory into one deterministic report file."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise OSError(f"run directory {run_dir} does not exist")
    payload = {}
    for name in ("summary", "checks", "regions", "holder_reports", "constants", "mtw_report"):
        path = run_dir / f"{name}.json"
        if path.exists():
            with open(path) as fh:
                payload[name] = json.load(fh)
    if fmt == "json":
        out = run_dir / "report.json"
        _json_dump(payload, out)
        return out
    if fmt == "csv":
        import csv

        out = run_dir / "report.csv"
        rows = _flatten("", payload)
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["key", "value"])
            for key, value in rows:
                writer.writerow([key, value])
        return out
    raise ConfigError(f"unknown report format {fmt!r}")


def _flatten(prefix: str, obj) -> list:
    if isinstance(obj, dict):
        rows = []
        for key in sorted(obj):
            rows.extend(_flatten(f"{prefix}{key}.", obj[key]))
        return rows
    if isinstance(obj, list):
        rows = []
        for i, item in enumerate(obj):
            rows.extend(_flatten(f"{prefix}{i}.", item))
        return rows
    return [(prefix.rstrip("."), _scalar(obj))]


def _scalar(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v

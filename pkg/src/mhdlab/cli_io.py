"""Run configuration, command dispatch, manifests and artifact output.

Usage::

    mhdlab <command> --config run.json [--set block.key=value ...]

Commands: profile-check, spectrum, evolve-linear, eigen-ss, construct, verify, all.
Exit status: 0 pass, 2 numerical acceptance failure, 1 usage error.
Artifacts go to ``<outdir>/<config-hash>/`` next to a ``manifest.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
COMMANDS = ("profile-check", "spectrum", "evolve-linear", "eigen-ss", "construct", "verify", "all")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UsageError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration schema


@dataclass
class ProfileBlock:
    kind: str = "rational"
    parameters: list = field(default_factory=lambda: [1.0, 0.75, 0.0, 1.0])
    epsilon: float = 0.05
    beta: float = 1.0
    r_max: float = 1000.0
    n_points: int = 800
    table_r: list = field(default_factory=list)
    table_omega: list = field(default_factory=list)
    table_b: list = field(default_factory=list)


@dataclass
class GridBlock:
    n_r: int = 256
    n_z: int = 128
    R_max: float = 12.0
    Z_max: float = 12.0
    z_topology: str = "periodic"
    z_length: float = 2 * math.pi


@dataclass
class SpectrumBlock:
    n_r: int = 512
    R_max: float = 12.0
    k_cap: int = 64
    k_star_max: int = 32


@dataclass
class EvolutionBlock:
    frame: str = "physical"
    dt: float = 0.05
    t_end: float = 150.0
    viscous: bool = False
    beta: float = 1.0
    hyperdiffusion: float = 0.0
    seed: int = 0
    scheme: str = "imex-cn-heun"
    arnoldi: bool = True
    arnoldi_n_z: int = 32
    arnoldi_tol: float = 1e-8
    rate_estimate: float = 0.2
    growth_rtol: float = 0.02
    realness_tol: float = 1e-3
    decay_bound: float = -0.22


@dataclass
class ConstructionBlock:
    profile: ProfileBlock = field(default_factory=lambda: ProfileBlock(parameters=[2.0, 0.75, 0.0, 1.0],
                                                                       epsilon=0.6))
    n_r: int = 48
    n_z: int = 96
    R_max: float = 12.0
    Z_max: float = 12.0
    betas: list = field(default_factory=lambda: [25.0, 50.0, 100.0])
    ideal: bool = True
    tau_end: float = 0.0
    n_efold: float = 16.0
    direct_n_efold: float = 10.0
    N: int = 3
    epsilon0_factor: float = 0.5
    picard_tol: float = 1e-9
    arnoldi_tol: float = 1e-8
    store_stride: int = 2
    weak_tol: float = 1e-5
    energy_tol: float = 1e-5
    test_functions: int = 24


@dataclass
class RunConfig:
    profile: ProfileBlock = field(default_factory=ProfileBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    spectrum: SpectrumBlock = field(default_factory=SpectrumBlock)
    evolution: EvolutionBlock = field(default_factory=EvolutionBlock)
    construction: ConstructionBlock = field(default_factory=ConstructionBlock)
    outdir: str = "runs"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("outdir")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# numeric fields that must be strictly positive (tolerances, sizes, steps)
_POSITIVE = {
    "ProfileBlock": ("epsilon", "r_max", "n_points"),
    "GridBlock": ("n_r", "n_z", "R_max", "Z_max", "z_length"),
    "SpectrumBlock": ("n_r", "R_max", "k_cap", "k_star_max"),
    "EvolutionBlock": ("dt", "t_end", "arnoldi_n_z", "arnoldi_tol", "rate_estimate", "growth_rtol",
                       "realness_tol"),
    "ConstructionBlock": ("n_r", "n_z", "R_max", "Z_max", "n_efold", "direct_n_efold", "N", "epsilon0_factor",
                          "picard_tol", "arnoldi_tol", "store_stride", "weak_tol", "energy_tol", "test_functions"),
}
_MIN = {("SpectrumBlock", "k_cap"): 2, ("ProfileBlock", "beta"): 1.0, ("EvolutionBlock", "beta"): 0.0,
        ("ConstructionBlock", "test_functions"): 20, ("ConstructionBlock", "N"): 3,
        ("GridBlock", "n_r"): 4, ("GridBlock", "n_z"): 2}
_CHOICES = {("ProfileBlock", "kind"): ("rational", "gaussian", "table"),
            ("GridBlock", "z_topology"): ("periodic", "truncated"),
            ("EvolutionBlock", "frame"): ("physical", "similarity"),
            ("EvolutionBlock", "scheme"): ("imex-cn-heun",)}


def _type_ok(value, default) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def _build(cls, data, path: str, problems: list[str]):
    if not isinstance(data, dict):
        problems.append(f"{path or 'config'}: expected an object")
        return cls()
    proto = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key in sorted(set(data) - names):
        problems.append(f"{path + '.' if path else ''}{key}: unknown key")
    kw = {}
    for f in dataclasses.fields(cls):
        where = f"{path + '.' if path else ''}{f.name}"
        default = getattr(proto, f.name)
        if f.name not in data:
            continue
        value = data[f.name]
        if dataclasses.is_dataclass(default):
            kw[f.name] = _build(type(default), value, where, problems)
            continue
        if not _type_ok(value, default):
            problems.append(f"{where}: expected {type(default).__name__}, got {type(value).__name__}")
            continue
        if isinstance(default, float):
            value = float(value)
            if not math.isfinite(value):
                problems.append(f"{where}: must be finite")
                continue
        if isinstance(default, list):
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                problems.append(f"{where}: expected a list of numbers")
                continue
            value = [float(v) for v in value]
        kw[f.name] = value
    obj = cls(**kw)
    name = cls.__name__
    for fname in _POSITIVE.get(name, ()):
        v = getattr(obj, fname)
        if not v > 0:
            problems.append(f"{path + '.' if path else ''}{fname}: must be > 0, got {v}")
    for (cname, fname), lo in _MIN.items():
        if cname == name and getattr(obj, fname) < lo:
            problems.append(f"{path + '.' if path else ''}{fname}: must be >= {lo}, got {getattr(obj, fname)}")
    for (cname, fname), choices in _CHOICES.items():
        if cname == name and getattr(obj, fname) not in choices:
            problems.append(f"{path + '.' if path else ''}{fname}: must be one of {list(choices)}, "
                            f"got {getattr(obj, fname)!r}")
    return obj


def _cross_checks(cfg: RunConfig, problems: list[str]) -> None:
    ev, g, c = cfg.evolution, cfg.grid, cfg.construction
    if ev.frame == "similarity" and g.z_topology == "periodic":
        problems.append("evolution.frame: the similarity frame needs grid.z_topology = 'truncated'")
    if g.z_topology == "truncated" and g.n_z % 2:
        problems.append(f"grid.n_z: truncated grids need an even n_z, got {g.n_z}")
    if c.n_z % 2:
        problems.append(f"construction.n_z: must be even, got {c.n_z}")
    if not c.betas or any(b <= 0 for b in c.betas):
        problems.append("construction.betas: need at least one positive beta")
    if c.direct_n_efold > c.n_efold:
        problems.append(f"construction.direct_n_efold: must not exceed construction.n_efold = {c.n_efold}")
    if ev.arnoldi and ev.arnoldi_n_z > g.n_z:
        problems.append(f"evolution.arnoldi_n_z: must not exceed grid.n_z = {g.n_z}")
    for path, blk in (("profile", cfg.profile), ("construction.profile", c.profile)):
        try:
            profile_spec(blk)
        except ValueError as exc:
            problems.append(f"{path}: {exc}")


def parse_config(text: str) -> RunConfig:
    """Validated RunConfig from JSON text; raises ConfigError listing every violation."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON ({exc})"]) from None
    problems: list[str] = []
    cfg = _build(RunConfig, data, "", problems)
    if not problems:
        _cross_checks(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """``block.key=value`` on scalar fields; values are parsed as JSON when possible."""
    out = json.loads(json.dumps(data))
    ref = RunConfig().to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"--set {item!r}: expected key=value"])
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node, proto = out, ref
        for p in parts[:-1]:
            if not isinstance(proto, dict) or p not in proto:
                raise ConfigError([f"--set {key}: unknown key"])
            node = node.setdefault(p, {})
            proto = proto[p]
        leaf = parts[-1]
        if not isinstance(proto, dict) or leaf not in proto:
            raise ConfigError([f"--set {key}: unknown key"])
        if isinstance(proto[leaf], (dict, list)):
            raise ConfigError([f"--set {key}: only scalar fields can be overridden"])
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node[leaf] = value
    return out


def profile_spec(blk: ProfileBlock):
    from .profiles import ProfileSpec

    if blk.kind == "table":
        return ProfileSpec.from_table(blk.table_r, blk.table_omega, blk.table_b, epsilon=blk.epsilon,
                                      beta=blk.beta)
    return ProfileSpec(kind=blk.kind, parameters=tuple(blk.parameters), epsilon=blk.epsilon, beta=blk.beta)


# ---------------------------------------------------------------------------
# run directory and manifest


def _versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__,
            "mhdlab": __version__}


class RunDir:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.hash = cfg.config_hash()
        self.path = Path(cfg.outdir) / self.hash
        self.path.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.path / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
            if self.manifest.get("config_hash") != self.hash:
                raise UsageError(f"{self.manifest_path} belongs to config {self.manifest.get('config_hash')}")
        else:
            self.manifest = {"config_hash": self.hash, "config": cfg.to_dict(), "stages": {}}
        self.manifest["versions"] = _versions()

    def file(self, name: str) -> Path:
        return self.path / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.file(name)
        p.write_text(text)
        return p

    def write_json(self, name: str, payload: dict) -> Path:
        from .nonuniqueness import _plain

        body = dict(payload)
        body["config_hash"] = self.hash
        return self.write_text(name, json.dumps(body, indent=2, sort_keys=True, default=_plain) + "\n")

    def write_csv(self, name: str, text: str) -> Path:
        return self.write_text(name, f"# config_hash: {self.hash}\n" + text)

    def record(self, stage: str, status: int, artifacts: list[Path], wall: float, summary: dict) -> None:
        self.manifest["stages"][stage] = {"status": status, "wall_time_s": round(wall, 3),
                                          "artifacts": [p.name for p in artifacts], "summary": summary}
        stages = self.manifest["stages"]
        self.manifest["stages"] = {k: stages[k] for k in sorted(stages, key=PIPELINE.index)}
        self.manifest_path.write_text(json.dumps(self.manifest, indent=2, default=str) + "\n")

    def artifact(self, stage: str, name: str) -> Path:
        """Path of an artifact produced by an earlier stage, checked against the config hash."""
        entry = self.manifest["stages"].get(stage)
        if entry is None or name not in entry["artifacts"]:
            raise UsageError(f"stage {stage!r} has not produced {name!r} for config {self.hash}; run it first")
        p = self.file(name)
        if p.suffix == ".json":
            got = json.loads(p.read_text()).get("config_hash")
            if got != self.hash:
                raise UsageError(f"{p} carries config hash {got}, expected {self.hash}")
        return p


# ---------------------------------------------------------------------------
# stages


def stage_profile_check(cfg: RunConfig, run: RunDir):
    from .profiles import check_decay, eval_profile, geometric_grid, mri_criterion

    spec = profile_spec(cfg.profile)
    prof = eval_profile(spec, geometric_grid(cfg.profile.r_max, cfg.profile.n_points, r_min=1e-3))
    rep = check_decay(prof)
    crit = mri_criterion(prof)
    failed = rep.failed()
    out = {"passes": rep.passes, "failed": failed, "alpha_fit": rep.alpha_fit, "beta_fit": rep.beta_fit,
           "exponents": rep.exponents, "stable_rayleigh": crit.stable_rayleigh, "r0": crit.r0,
           "marginal": crit.marginal}
    arts = [run.write_csv("profile.csv", prof.to_csv()), run.write_json("profile_check.json", out)]
    if failed:
        print(f"profile-check: decay conditions failed: {', '.join(failed)}", file=sys.stderr)
    return (EXIT_FAIL if failed else EXIT_OK), arts, {"failed": failed}


def stage_spectrum(cfg: RunConfig, run: RunDir):
    from .profiles import eval_profile, geometric_grid
    from .radial_spectrum import SpectrumError, total_negative_count

    sp = cfg.spectrum
    spec = profile_spec(cfg.profile)
    prof = eval_profile(spec, geometric_grid(sp.R_max, sp.n_r + 2))
    try:
        summ = total_negative_count(prof, spec.epsilon, k_cap=sp.k_cap)
    except SpectrumError as exc:
        print(f"spectrum: {exc}", file=sys.stderr)
        return EXIT_FAIL, [], {"error": str(exc)}
    agree = all(r.n_neg == r.n_neg_dense for r in summ.per_k)
    ok = agree and (summ.total == 0 or (summ.k_star is not None and summ.k_star <= sp.k_star_max))
    out = json.loads(summ.to_json())
    out.update(inertia_matches_dense=agree, n_r=sp.n_r, R_max=sp.R_max, passed=ok)
    arts = [run.write_csv("spectrum.csv", summ.to_csv()), run.write_json("spectrum.json", out)]
    return (EXIT_OK if ok else EXIT_FAIL), arts, {"total": summ.total, "k_star": summ.k_star}


def _grid(cfg: RunConfig):
    from .axi_fields import GridRZ

    g = cfg.grid
    if g.z_topology == "periodic":
        return GridRZ(g.n_r, g.R_max, g.n_z, g.z_length, True)
    return GridRZ.similarity(g.n_r, g.n_z, R=g.R_max, Z=g.Z_max)


def _similarity_background(cfg: RunConfig, grid):
    from .nonuniqueness import similarity_background

    return similarity_background(profile_spec(cfg.construction.profile), grid)


def stage_evolve_linear(cfg: RunConfig, run: RunDir):
    import numpy as np

    from .axi_fields import AxiField, GridRZ, project_state
    from .evolution import (EvolutionConfig, EvolutionError, check_cfl, cfl_limit, heun_tolerance, make_model,
                            measure_growth, propagator_eigs)

    ev = cfg.evolution
    grid = _grid(cfg)
    econf = EvolutionConfig(dt=ev.dt, t_end=ev.t_end, scheme=ev.scheme, viscous=ev.viscous, frame=ev.frame,
                            beta=ev.beta, epsilon=cfg.profile.epsilon, hyperdiffusion=ev.hyperdiffusion)
    background = None
    if ev.frame == "similarity":
        background = _similarity_background(cfg, grid)
        if ev.beta == 0:
            econf = dataclasses.replace(econf, beta=0.0, viscous=True)
        else:
            econf = dataclasses.replace(econf, viscous=True)

    def build(g):
        return make_model(econf, g, profile=profile_spec(cfg.profile),
                          background=_similarity_background(cfg, g) if background is not None else None)

    model = build(grid)
    try:
        check_cfl(econf, model)
    except EvolutionError as exc:
        raise UsageError(f"evolution.dt: {exc}") from exc
    rng = np.random.default_rng(ev.seed)
    n = AxiField.zeros(grid, model.frame).to_vector().size
    y0 = project_state(AxiField.from_vector(grid, rng.standard_normal(n), frame=model.frame))
    fit = measure_growth(y0, econf, model=model)
    hist = "t,log_norm\n" + "".join(f"{t!r},{v!r}\n" for t, v in fit.mode_norm_history)
    out = {"rate": fit.rate, "r2": fit.r2, "window": list(fit.window), "dt": ev.dt, "t_end": ev.t_end,
           "frame": ev.frame, "grid": grid.descriptor()}
    ok = fit.converged
    if ev.frame == "similarity" and ev.beta == 0:
        out["decay_bound"] = ev.decay_bound
        ok = ok and fit.rate <= ev.decay_bound
    elif ev.frame == "physical":
        out["grid_tolerance"] = heun_tolerance(model, ev.dt)
        if ev.arnoldi and grid.periodic:
            small = GridRZ(grid.n_r, grid.R, ev.arnoldi_n_z, grid.z_length, True)
            mode = propagator_eigs(econf, build(small), small, n_modes=1, tol=ev.arnoldi_tol,
                                   rate_estimate=ev.rate_estimate)[0]
            lam = mode.eigenvalue
            rel = abs(fit.rate - lam.real) / abs(lam.real)
            realness = abs(lam.imag) / abs(lam.real)
            out.update(arnoldi_re=lam.real, arnoldi_im=lam.imag, arnoldi_residual=mode.residual,
                       relative_difference=rel, realness=realness, arnoldi_n_z=ev.arnoldi_n_z)
            ok = ok and rel <= ev.growth_rtol and realness <= ev.realness_tol
        else:
            ok = fit.rate <= 2 * out["grid_tolerance"]
    out["cfl_limit"] = cfl_limit(model)
    out["passed"] = bool(ok)
    arts = [run.write_csv("growth_history.csv", hist), run.write_json("growth.json", out)]
    return (EXIT_OK if ok else EXIT_FAIL), arts, {"rate": fit.rate}


def _construction_grid(cfg: RunConfig):
    from .axi_fields import GridRZ

    c = cfg.construction
    return GridRZ.similarity(c.n_r, c.n_z, R=c.R_max, Z=c.Z_max)


def stage_eigen_ss(cfg: RunConfig, run: RunDir):
    from .axi_fields import write_snapshot
    from .nonuniqueness import ConstructionError, select_beta, similarity_eigenpair, trend_gaps

    c = cfg.construction
    xi0 = _similarity_background(cfg, _construction_grid(cfg))
    entries = []
    ideal = None
    if c.ideal:
        ideal = similarity_eigenpair(xi0, 0.0, ideal=True, tol=c.arnoldi_tol)
        entries.append(ideal)
    for beta in sorted(c.betas):
        entries.append(similarity_eigenpair(xi0, beta, tol=c.arnoldi_tol))
    rows = ["beta,ideal,re,im,scaled_rate,dt,residual,real"]
    for e in entries:
        s = e.summary()
        rows.append(",".join(repr(s[k]) if isinstance(s[k], float) else str(s[k]).lower()
                             for k in ("beta", "ideal", "re", "im", "scaled_rate", "dt", "residual", "real")))
    out = {"entries": [e.summary() for e in entries]}
    ok = True
    if ideal is not None:
        gaps, trend = trend_gaps(entries, ideal.eigenvalue.real)
        out.update(ideal_rate=ideal.eigenvalue.real, gaps=gaps, trend_ok=trend)
        ok = trend
    arts = [run.write_csv("eigen_ss.csv", "\n".join(rows) + "\n")]
    try:
        sel = select_beta(entries)
    except ConstructionError as exc:
        out.update(selected=None, error=str(exc))
        arts.append(run.write_json("eigen_ss.json", out))
        return EXIT_FAIL, arts, {"selected": None}
    out["selected"] = sel.summary()
    path = run.file("eta.bin")
    write_snapshot(path, sel.mode, extra={"config_hash": run.hash, **sel.summary()})
    arts += [run.write_json("eigen_ss.json", out), path]
    return (EXIT_OK if ok else EXIT_FAIL), arts, {"selected_beta": sel.beta, "a": sel.eigenvalue.real}


def _load_eigen(run: RunDir):
    from .axi_fields import energy_norm, read_snapshot
    from .nonuniqueness import EigenEntry

    meta = json.loads(run.artifact("eigen-ss", "eigen_ss.json").read_text())["selected"]
    if meta is None:
        raise UsageError("eigen-ss selected no beta; nothing to construct")
    mode, header = read_snapshot(run.artifact("eigen-ss", "eta.bin"))
    if header.get("extra", {}).get("config_hash") != run.hash:
        raise UsageError("eta.bin belongs to a different config")
    mode = mode * (1.0 / energy_norm(mode))
    return EigenEntry(meta["beta"], complex(meta["re"], meta["im"]), meta["dt"], meta["residual"], mode)


def stage_construct(cfg: RunConfig, run: RunDir):
    from .axi_fields import write_snapshot, write_trajectory
    from .nonuniqueness import ConstructionError, agreement, construct, decay_fit, early_intercept, tail_check

    c = cfg.construction
    eig = _load_eigen(run)
    xi0 = _similarity_background(cfg, _construction_grid(cfg))
    try:
        con = construct(xi0, eig, tau_end=c.tau_end, n_efold=c.n_efold, N=c.N,
                        epsilon0=c.epsilon0_factor * eig.eigenvalue.real, picard_tol=c.picard_tol,
                        direct_n_efold=c.direct_n_efold)
    except ConstructionError as exc:
        print(f"construct: {exc}", file=sys.stderr)
        return EXIT_FAIL, [], {"error": str(exc)}
    fp, cf = con.fixed, con.fixed.config
    out = {"beta": cf.beta, "a": cf.a, "dt": cf.dt, "tau_start": fp.tau_start, "tau_end": fp.tau_end,
           "N": cf.N, "epsilon0": cf.epsilon0, "ratios": fp.ratios, "distances": fp.distances,
           "iterations": fp.iterations, "retunes": fp.retunes,
           "decay_fit": decay_fit(con.per, cf.a, cf.N),
           "agreement": agreement(con.direct, con.per, cf, xi0),
           "early_window": early_intercept(con.direct, cf, xi0),
           "tail_check": {"relative_change": tail_check(cf, xi0), "tol": 1e-8}}
    ok = (max(fp.ratios, default=0.0) < 0.5 and out["decay_fit"]["ratio"] >= 1.5
          and out["agreement"]["relative"] <= out["agreement"]["tol"]
          and out["tail_check"]["relative_change"] < out["tail_check"]["tol"])
    out["passed"] = bool(ok)
    s = c.store_stride
    idx = list(range(0, len(con.per), s))
    if idx[-1] != len(con.per) - 1:
        idx.append(len(con.per) - 1)
    per_path, dir_path = run.file("xi_per.traj"), run.file("xi_direct_end.bin")
    write_trajectory(per_path, [con.per.taus[i] for i in idx], [con.per.states[i] for i in idx],
                     extra={"config_hash": run.hash})
    write_snapshot(dir_path, con.direct.states[-1], extra={"config_hash": run.hash, "tau": con.direct.taus[-1]})
    norms = ["tau,per_H3,direct_minus_background_L2"]
    from .axi_fields import energy_norm, sobolev_norm

    off = len(con.per) - len(con.direct)  # the direct march covers the tail of the tau grid
    for i in idx:
        dev = energy_norm(con.direct.states[i - off] - xi0 * cf.beta) if i >= off else float("nan")
        norms.append(f"{con.per.taus[i]!r},{sobolev_norm(con.per.states[i], cf.N)!r},{dev!r}")
    arts = [run.write_json("construction.json", out), run.write_csv("construction_norms.csv",
                                                                     "\n".join(norms) + "\n"),
            per_path, dir_path]
    return (EXIT_OK if ok else EXIT_FAIL), arts, {"a": cf.a, "ratios": fp.ratios}


def stage_verify(cfg: RunConfig, run: RunDir):
    import numpy as np

    from .axi_fields import read_trajectory
    from .nonuniqueness import (Trajectory, background_force, build_xlim, decay_fit, make_test_bank,
                                to_physical, verify)

    c = cfg.construction
    eig = _load_eigen(run)
    meta = json.loads(run.artifact("construct", "construction.json").read_text())
    taus, per_states, header = read_trajectory(run.artifact("construct", "xi_per.traj"))
    if header.get("extra", {}).get("config_hash") != run.hash:
        raise UsageError("xi_per.traj belongs to a different config")
    xi0 = _similarity_background(cfg, _construction_grid(cfg))
    beta, a = meta["beta"], meta["a"]
    force = background_force(beta, xi0)
    bg = xi0 * beta
    second = Trajectory(taus, [bg + build_xlim(eig.mode, a, t) + p for t, p in zip(taus, per_states)])
    pair = to_physical(second, np.exp(taus), beta, xi0, force, a)
    bank = make_test_bank((taus[0], taus[-1]), c.test_functions)
    rep = verify(pair, bank, weak_tol=c.weak_tol, energy_tol=c.energy_tol)
    rep.perturbation_decay_fit = decay_fit(Trajectory(taus, per_states), a, meta["N"])
    rep.agreement = meta["agreement"]
    rep.fixed_point = {"ratios": meta["ratios"], "max_ratio": max(meta["ratios"], default=0.0),
                       "ratio_tol": 0.5, "iterations": meta["iterations"], "retunes": meta["retunes"],
                       "tau_start": meta["tau_start"], "tau_end": meta["tau_end"], "a": a, "beta": beta}
    rep.config_hash = run.hash
    arts = [run.write_text("verification.json", rep.to_json() + "\n")]
    return (EXIT_OK if rep.passed else EXIT_FAIL), arts, {"checks": rep.checks()}


STAGES = {"profile-check": stage_profile_check, "spectrum": stage_spectrum,
          "evolve-linear": stage_evolve_linear, "eigen-ss": stage_eigen_ss,
          "construct": stage_construct, "verify": stage_verify}
PIPELINE = ("profile-check", "spectrum", "evolve-linear", "eigen-ss", "construct", "verify")


def _limit_threads():
    n = os.environ.get("MHDLAB_THREADS")
    if not n:
        return None
    try:
        count = int(n)
    except ValueError:
        raise UsageError(f"MHDLAB_THREADS must be an integer, got {n!r}") from None
    if count < 1:
        raise UsageError("MHDLAB_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=count)


def dispatch(command: str, cfg: RunConfig) -> int:
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    run = RunDir(cfg)
    limiter = _limit_threads()
    try:
        status = EXIT_OK
        for name in (PIPELINE if command == "all" else (command,)):
            t0 = time.perf_counter()
            code, arts, summary = STAGES[name](cfg, run)
            run.record(name, code, arts, time.perf_counter() - t0, summary)
            print(f"{name}: {'pass' if code == EXIT_OK else 'FAIL'} -> {run.path}")
            status = max(status, code)
            if command == "all" and code != EXIT_OK and name in ("eigen-ss", "construct"):
                break
        return status
    finally:
        if limiter is not None:
            limiter.unregister()


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="mhdlab", description="MRI spectra and self-similar MHD constructions")
    ap.add_argument("command", help=" | ".join(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a scalar field, e.g. evolution.dt=0.01")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command not in COMMANDS:
            raise UsageError(f"unknown command {args.command!r}; expected one of {', '.join(COMMANDS)}")
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config: invalid JSON ({exc})"]) from None
        cfg = parse_config(json.dumps(apply_overrides(data, args.set)))
        return dispatch(args.command, cfg)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line front end.

Every experiment echoes its resolved configuration, writes CSV tables whose
header rows name the quantities they report, and drops a run-manifest next
to the outputs.  Identical config and seed give byte-identical CSV files.

Generator file grammar (one directive per line, '#' comments):

    d 2                         dimension
    theta 1                     root subset indices
    generator 4 0 0 0.25        d*d row-major entries, one line per generator
    functional 1:1.0            weight coefficients k:c (optional, repeatable)

Ball caches live under $TD_CACHE_DIR when that variable is set.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field

import click
import numpy as np

from . import __version__
from .cartan import (
    GroupElement,
    LinearFunctional,
    RootSubset,
    cartan_project,
    phi_length,
    weight_coords,
)
from .errors import ConfigError, TransverseDynamicsError
from .flow import invariance_residual, BMSAssembly, recurrence_diagnostic
from .orbit import GroupPreset, enumerate_ball, divergence_diagnostic, WordBall
from .patterson import (
    HFunction,
    conformality_check,
    conical_mass_estimate,
    patterson_measure,
    shadow_lemma_check,
    voronoi_cells,
)
from .presets import build_preset, preset_names
from .series import (
    critical_exponent,
    divergence_type,
    entropy_drop_experiment,
    manhattan_experiment,
    poincare_partial,
)


@dataclass
class ExperimentConfig:
    """Resolved run configuration; round-trips losslessly through JSON."""

    command: str
    preset: str = None
    gens_file: str = None
    radius: int = 8
    theta: list = None
    functionals: list = None  # list of {k: c} dicts
    lambdas: list = None
    subgroup: str = None
    s: float = None
    shadow_r: float = None
    seed: int = 0
    out_dir: str = "td-out"
    tolerances: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return path


def write_manifest(cfg: ExperimentConfig, outputs, started):
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = {
        "config": json.loads(cfg.to_json()),
        "version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
        "outputs": sorted(os.path.basename(o) for o in outputs),
    }
    path = os.path.join(cfg.out_dir, f"manifest_{cfg.command}.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def parse_generator_file(path):
    d = None
    theta = None
    gens = []
    functionals = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#")[0].strip()
            if not line:
                continue
            key, *rest = line.split()
            if key == "d":
                d = int(rest[0])
            elif key == "theta":
                theta = tuple(int(x) for x in rest)
            elif key == "generator":
                if d is None:
                    raise ConfigError(f"{path}:{lineno}: generator before d")
                vals = [float(x) for x in rest]
                if len(vals) != d * d:
                    raise ConfigError(
                        f"{path}:{lineno}: expected {d * d} entries, got {len(vals)}"
                    )
                gens.append(np.array(vals).reshape(d, d))
            elif key == "functional":
                coeffs = {}
                for item in rest:
                    k, c = item.split(":")
                    coeffs[int(k)] = float(c)
                functionals.append(coeffs)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown directive {key!r}")
    if d is None or not gens:
        raise ConfigError(f"{path}: needs a dimension and at least one generator")
    theta = theta or tuple(range(1, d))
    return d, theta, gens, functionals


def resolve_preset(cfg: ExperimentConfig) -> GroupPreset:
    if cfg.preset:
        return build_preset(cfg.preset)
    if cfg.gens_file:
        d, theta, gens, _ = parse_generator_file(cfg.gens_file)
        return GroupPreset(
            name=os.path.splitext(os.path.basename(cfg.gens_file))[0],
            generators=tuple(GroupElement(g) for g in gens),
            theta=RootSubset(d, theta),
        )
    raise ConfigError("need --preset or --gens FILE")


def resolve_phi(preset: GroupPreset, cfg: ExperimentConfig, index=0) -> LinearFunctional:
    if cfg.functionals:
        coeffs = {int(k): float(v) for k, v in cfg.functionals[index].items()}
        return LinearFunctional(preset.theta, coeffs)
    return LinearFunctional(preset.theta, {min(preset.theta.indices): 1.0})


def get_ball(preset, radius, budget=None) -> WordBall:
    cache = os.environ.get("TD_CACHE_DIR")
    if cache:
        hit = WordBall.load(preset, radius, cache)
        if hit is not None:
            return hit
    ball = enumerate_ball(preset, radius, budget=budget)
    if cache and not ball.budget_exceeded:
        ball.save(cache)
    return ball


@click.group()
@click.version_option(__version__)
def main():
    """Workbench for orbit growth, conformal measures, and flow diagnostics."""


def _common(f):
    f = click.option("--preset", type=str, default=None, help="named preset")(f)
    f = click.option("--gens", "gens_file", type=click.Path(exists=True), default=None,
                     help="generator file (see module docstring)")(f)
    f = click.option("--config", "config_file", type=click.Path(exists=True), default=None,
                     help="JSON ExperimentConfig; flags override")(f)
    f = click.option("--radius", type=int, default=8, show_default=True)(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--out", "out_dir", type=str, default="td-out", show_default=True)(f)
    return f


def _make_config(command, config_file, **kw):
    if config_file:
        with open(config_file) as fh:
            cfg = ExperimentConfig.from_json(fh.read())
        cfg.command = command
    else:
        cfg = ExperimentConfig(command=command)
    for key, val in kw.items():
        if val is not None:
            setattr(cfg, key, val)
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


@main.command("presets")
def cmd_presets():
    """List shipped presets."""
    for name in preset_names():
        click.echo(name)


@main.command("ball")
@_common
@click.option("--budget", type=int, default=None, help="element-count cap")
def cmd_ball(preset, gens_file, config_file, radius, seed, out_dir, budget):
    """Enumerate a word ball and export per-sphere statistics."""
    started = time.time()
    cfg = _make_config("ball", config_file, preset=preset, gens_file=gens_file,
                       radius=radius, seed=seed, out_dir=out_dir)
    p = resolve_preset(cfg)
    ball = enumerate_ball(p, cfg.radius, budget=budget)
    rows = [
        (r["sphere"], r["count"], r["min_alpha"], r["min_omega1"], r["max_omega1"])
        for r in ball.sphere_stats_rows()
    ]
    out = write_csv(
        os.path.join(cfg.out_dir, "ball_spheres.csv"),
        ["sphere", "count", "min_alpha", "min_omega1", "max_omega1"],
        rows,
    )
    if ball.budget_exceeded:
        click.echo("warning: budget exceeded, ball is partial", err=True)
    write_manifest(cfg, [out], started)
    click.echo(f"{ball.n_elements} elements -> {out}")


@main.command("kappa")
@_common
@click.option("--matrix", type=str, default=None, help="ad-hoc row-major entries")
@click.option("--theta", "theta_opt", type=str, default=None, help="comma-separated indices")
def cmd_kappa(preset, gens_file, config_file, radius, seed, out_dir, matrix, theta_opt):
    """Per-element Cartan data: weight coordinates and length functional."""
    started = time.time()
    cfg = _make_config("kappa", config_file, preset=preset, gens_file=gens_file,
                       radius=radius, seed=seed, out_dir=out_dir)
    rows = []
    if matrix is not None:
        vals = [float(x) for x in matrix.replace(",", " ").split()]
        d = int(round(len(vals) ** 0.5))
        if d * d != len(vals):
            raise ConfigError(f"--matrix needs a square number of entries, got {len(vals)}")
        theta_idx = tuple(int(x) for x in theta_opt.split(",")) if theta_opt else tuple(range(1, d))
        theta = RootSubset(d, theta_idx)
        g = GroupElement(np.array(vals).reshape(d, d))
        kappa = cartan_project(g)
        wc = weight_coords(kappa, theta)
        phi = LinearFunctional(theta, {min(theta.indices): 1.0})
        rows.append(("adhoc", *[wc.values[k] for k in theta], phi_length(g, phi)))
        header = ["word"] + [f"omega_{k}" for k in theta] + ["phi_length"]
    else:
        p = resolve_preset(cfg)
        theta = p.theta
        if theta_opt:
            theta = RootSubset(p.d, tuple(int(x) for x in theta_opt.split(",")))
        ball = get_ball(p, cfg.radius)
        phi = resolve_phi(p, cfg)
        header = ["word"] + [f"omega_{k}" for k in theta] + ["phi_length"]
        for n, i, word in ball.iter_words():
            g = ball.element(n, i)
            wc = weight_coords(cartan_project(g), theta)
            rows.append(
                ("".join(map(str, word)) or "e",
                 *[wc.values[k] for k in theta],
                 phi_length(g, phi))
            )
    out = write_csv(os.path.join(cfg.out_dir, "kappa.csv"), header, rows)
    write_manifest(cfg, [out], started)
    click.echo(f"{len(rows)} rows -> {out}")


@main.command("delta")
@_common
@click.option("--phi", "phi_spec", type=str, default=None, help="functional as k:c,k:c")
def cmd_delta(preset, gens_file, config_file, radius, seed, out_dir, phi_spec):
    """Critical-exponent estimate with band, plus N(T) and partial-sum tables."""
    started = time.time()
    cfg = _make_config("delta", config_file, preset=preset, gens_file=gens_file,
                       radius=radius, seed=seed, out_dir=out_dir)
    if phi_spec:
        cfg.functionals = [dict(item.split(":") for item in phi_spec.split(","))]
    p = resolve_preset(cfg)
    phi = resolve_phi(p, cfg)
    ball = get_ball(p, cfg.radius)
    est = critical_exponent(p, phi, list(range(2, cfg.radius + 1)), ball=ball)
    outs = []
    outs.append(
        write_csv(
            os.path.join(cfg.out_dir, "delta_hat.csv"),
            ["delta_hat", "band", "slope_estimate", "bisect_estimate",
             "divergence_type", "possibly_infinite"],
            [(est.delta_hat, est.band, est.slope_estimate, est.bisect_estimate,
              divergence_type(est), est.possibly_infinite)],
        )
    )
    counts = est.counts
    grid = np.linspace(counts[0], counts[-1], 64)
    outs.append(
        write_csv(
            os.path.join(cfg.out_dir, "orbit_counts.csv"),
            ["T", "N_T"],
            [(t, est.count_below(t)) for t in grid],
        )
    )
    srows = [
        (s, r, poincare_partial(ball, phi, s))
        for s in (est.delta_hat, est.delta_hat * 1.1, est.delta_hat * 1.5)
        for r in (cfg.radius,)
    ]
    outs.append(
        write_csv(
            os.path.join(cfg.out_dir, "partial_sums.csv"),
            ["s", "radius", "partial_sum"], srows,
        )
    )
    write_manifest(cfg, outs, started)
    click.echo(f"delta_hat = {est.delta_hat:.6f} +- {est.band:.6f}")


@main.command("patterson")
@_common
@click.option("--s-ratio", type=float, default=1.05, show_default=True,
              help="s = delta_hat * ratio")
@click.option("--h-power", type=float, default=0.0, show_default=True,
              help="slowly-varying exponent; 0 means h == 1")
def cmd_patterson(preset, gens_file, config_file, radius, seed, out_dir, s_ratio, h_power):
    """Build a Patterson measure, validate conformality, export atoms as JSON."""
    started = time.time()
    cfg = _make_config("patterson", config_file, preset=preset, gens_file=gens_file,
                       radius=radius, seed=seed, out_dir=out_dir, s=s_ratio)
    p = resolve_preset(cfg)
    phi = resolve_phi(p, cfg)
    ball = get_ball(p, cfg.radius)
    est = critical_exponent(p, phi, [cfg.radius], ball=ball)
    s = est.delta_hat * s_ratio
    h = HFunction() if h_power == 0.0 else HFunction("patterson-slowly-varying", h_power)
    mu = patterson_measure(ball, phi, s, h, carrier="flag", delta_estimate=est)
    cells = voronoi_cells(mu, n_cells=48)
    rows = []
    for i in range(1, len(p.generators) + 1):
        rep = conformality_check(mu, p.generators[i - 1], cells)
        rows.append((i, rep.max_rel_error, rep.cells_used, rep.cells_skipped))
    outs = [
        write_csv(
            os.path.join(cfg.out_dir, "conformality.csv"),
            ["generator", "max_rel_error", "cells_used", "cells_skipped"],
            rows,
        )
    ]
    with open(os.path.join(cfg.out_dir, "measure.json"), "w") as fh:
        fh.write(mu.to_json())
    outs.append(os.path.join(cfg.out_dir, "measure.json"))
    write_manifest(cfg, outs, started)
    click.echo(f"s = {s:.6f}, atoms = {mu.n_atoms}, "
               f"worst generator conformality error = {max(r[1] for r in rows):.4f}")


@main.command("shadow-check")
@_common
@click.option("--s-ratio", type=float, default=1.03, show_default=True)
@click.option("--shadow-r", type=float, default=None, help="shadow radius (default R0+1)")
def cmd_shadow_check(preset, gens_file, config_file, radius, seed, out_dir, s_ratio, shadow_r):
    """Shadow-lemma ratio table and conical mass estimate."""
    started = time.time()
    cfg = _make_config("shadow_check", config_file, preset=preset, gens_file=gens_file,
                       radius=radius, seed=seed, out_dir=out_dir, shadow_r=shadow_r)
    p = resolve_preset(cfg)
    phi = resolve_phi(p, cfg)
    ball = get_ball(p, cfg.radius)
    est = critical_exponent(p, phi, [cfg.radius], ball=ball)
    mu = patterson_measure(ball, phi, est.delta_hat * s_ratio, carrier="flag")
    r = cfg.shadow_r
    if r is None:
        from .calibrate import calibrate_r0

        r = calibrate_r0(ball) + 1.0
    report = shadow_lemma_check(mu, ball, r)
    conical = conical_mass_estimate(mu, ball, r, seed=cfg.seed)
    outs = [
        write_csv(
            os.path.join(cfg.out_dir, "shadow_ratios.csv"),
            ["word_length", "word", "ratio"],
            [(n, "".join(map(str, w)), x) for n, w, x in report.rows],
        ),
        write_csv(
            os.path.join(cfg.out_dir, "conical_mass.csv"),
            ["estimate", "shadow_radius", "n_samples"],
            [(conical["estimate"], conical["shadow_radius"], conical["n_samples"])],
        ),
    ]
    write_manifest(cfg, outs, started)
    click.echo(
        f"ratios in [{report.ratio_min:.4g}, {report.ratio_max:.4g}] "
        f"(pass={report.passed}), conical mass >= {conical['estimate']:.3f}"
    )


@main.command("manhattan")
@_common
@click.option("--lambdas", type=str, default="0,0.25,0.5,0.75,1", show_default=True)
@click.option("--phi1", type=str, default=None, help="functional as k:c,...")
@click.option("--phi2", type=str, default=None)
def cmd_manhattan(preset, gens_file, config_file, radius, seed, out_dir, lambdas, phi1, phi2):
    """Manhattan-curve table with concavity check and equality-case probe."""
    started = time.time()
    cfg = _make_config("manhattan", config_file, preset=preset, gens_file=gens_file,
                       radius=radius, seed=seed, out_dir=out_dir,
                       lambdas=[float(x) for x in lambdas.split(",")])
    p = resolve_preset(cfg)
    theta = p.theta
    if phi1 and phi2:
        f1 = LinearFunctional(theta, {int(k): float(c) for k, c in
                                      (item.split(":") for item in phi1.split(","))})
        f2 = LinearFunctional(theta, {int(k): float(c) for k, c in
                                      (item.split(":") for item in phi2.split(","))})
    else:
        ks = sorted(theta.indices)
        f1 = LinearFunctional(theta, {ks[0]: 1.0})
        f2 = LinearFunctional(theta, {ks[-1]: 1.0})
    ball = get_ball(p, cfg.radius)
    table = manhattan_experiment(p, f1, f2, cfg.lambdas, cfg.radius, ball=ball)
    out = write_csv(
        os.path.join(cfg.out_dir, "manhattan.csv"),
        ["lambda", "delta_hat", "band", "concave_ok"],
        [(r.lam, r.delta_hat, r.band, r.concave_ok) for r in table.rows],
    )
    write_manifest(cfg, [out], started)
    click.echo(f"length probe max |l1 - l2| = {table.length_probe:.3e} -> {out}")


@main.command("entropy-drop")
@_common
@click.option("--subgroup", type=str, default="a", show_default=True)
def cmd_entropy_drop(preset, gens_file, config_file, radius, seed, out_dir, subgroup):
    """Critical-exponent gap between the group and a named subgroup."""
    started = time.time()
    cfg = _make_config("entropy_drop", config_file, preset=preset, gens_file=gens_file,
                       radius=radius, seed=seed, out_dir=out_dir, subgroup=subgroup)
    p = resolve_preset(cfg)
    phi = resolve_phi(p, cfg)
    report = entropy_drop_experiment(p, cfg.subgroup, phi, cfg.radius)
    out = write_csv(
        os.path.join(cfg.out_dir, "entropy_drop.csv"),
        ["delta_full", "band_full", "delta_sub", "band_sub", "gap",
         "hausdorff_sub_to_full", "hausdorff_full_to_sub"],
        [(report.delta_full, report.band_full, report.delta_sub, report.band_sub,
          report.gap, report.hausdorff_sub_to_full, report.hausdorff_full_to_sub)],
    )
    write_manifest(cfg, [out], started)
    click.echo(f"gap = {report.gap:.4f} (combined band {report.combined_band:.4f})")


@main.command("flow")
@_common
@click.option("--horizon", type=float, default=40.0, show_default=True)
@click.option("--samples", type=int, default=40, show_default=True)
def cmd_flow(preset, gens_file, config_file, radius, seed, out_dir, horizon, samples):
    """BMS invariance residual and the recurrence diagnostic."""
    started = time.time()
    cfg = _make_config("flow", config_file, preset=preset, gens_file=gens_file,
                       radius=radius, seed=seed, out_dir=out_dir)
    p = resolve_preset(cfg)
    phi = resolve_phi(p, cfg)
    from .cartan import dual_functional

    ball = get_ball(p, cfg.radius)
    est = critical_exponent(p, phi, [cfg.radius], ball=ball)
    s = est.delta_hat * 1.05
    mu = patterson_measure(ball, phi, s, carrier="flag")
    mubar = patterson_measure(ball, dual_functional(phi), s, carrier="flag")
    assembly = BMSAssembly(mu=mu, mubar=mubar, beta=s)
    res = invariance_residual(assembly, p.generators[0], seed=cfg.seed)

    ctx = p.domain_context
    pts = ctx.flag_boundary_batch(mu.materialized_flags())
    rng = np.random.default_rng(cfg.seed)
    xi = rng.choice(len(pts), size=samples, p=mubar.weights)
    yi = rng.choice(len(pts), size=samples, p=mu.weights)
    rec = recurrence_diagnostic(ball, pts[xi], pts[yi], horizon=horizon)
    outs = [
        write_csv(
            os.path.join(cfg.out_dir, "flow_invariance.csv"),
            ["max_rel_error", "pairs_used", "pairs_skipped"],
            [(res["max_rel_error"], res["pairs_used"], res["pairs_skipped"])],
        ),
        write_csv(
            os.path.join(cfg.out_dir, "flow_recurrence.csv"),
            ["horizon", "cell_radius", "samples", "return_fraction", "consistent_with"],
            [(rec["horizon"], rec["cell_radius"], rec["samples"],
              rec["return_fraction"], rec["consistent_with"])],
        ),
    ]
    write_manifest(cfg, outs, started)
    click.echo(
        f"invariance residual {res['max_rel_error']:.3e}; "
        f"recurrence: {rec['consistent_with']}"
    )


def run():
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        raise SystemExit(2)
    except click.exceptions.Abort:
        raise SystemExit(2)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(2)
    except TransverseDynamicsError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        raise SystemExit(3)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        raise SystemExit(3)


if __name__ == "__main__":
    run()

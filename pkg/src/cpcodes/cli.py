"""Batch command-line front end.

Every command writes its outputs plus a JSON run manifest (full parameter
set, seed, versions, output paths, wall time) sufficient to replay the run
byte-for-byte with ``cpc replay``.

Exit codes: 0 success, 2 bad usage, 3 design infeasible, 4 input dimension
mismatch, 5 corrupt stream, 6 resource guard exceeded.
"""

from __future__ import annotations

import json
import platform
import sys
import time

import click
import numpy as np

from . import __version__, evaluation, wsc
from .combinatorics import Composition, ResourceLimitError, rate_point_census
from .codec import (
    StreamError,
    decode,
    encode_cpc,
    load_code,
    read_stream,
    save_code,
    write_stream,
)
from .design import (
    DesignConfig,
    DesignInfeasibleError,
    design_common_composition,
    lloyd_general,
)
from .order_stats import folded_order_stats, gaussian_order_stats
from .streams import GENERATOR_ID

EXIT_DESIGN_INFEASIBLE = 3
EXIT_DIMENSION_MISMATCH = 4
EXIT_CORRUPT_STREAM = 5
EXIT_RESOURCE_GUARD = 6


def _versions() -> dict:
    import scipy

    return {
        "cpcodes": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _write_manifest(path, command, argv, params, seed, outputs, started):
    doc = {
        "command": command,
        "argv": argv,
        "parameters": params,
        "seed": seed,
        "generator": GENERATOR_ID,
        "versions": _versions(),
        "outputs": [str(p) for p in outputs],
        "wall_time_s": time.monotonic() - started,
    }
    with open(path, "w", newline="\n") as fp:
        json.dump(doc, fp, indent=2, sort_keys=True)
        fp.write("\n")


def _parse_composition(text: str) -> Composition:
    try:
        return Composition(tuple(int(p) for p in text.split(",")))
    except ValueError as exc:
        raise click.UsageError(f"bad composition {text!r}: {exc}")


def _parse_range(text: str) -> range:
    try:
        lo, hi = (int(v) for v in text.split(":"))
        return range(lo, hi + 1)
    except ValueError:
        raise click.UsageError(f"bad range {text!r}; expected LO:HI")


@click.group()
def main():
    """Design, code with, and evaluate permutation codebooks on concentric spheres."""


@main.command("design")
@click.option("--n", type=int, required=True, help="Vector dimension.")
@click.option("--j", "-J", "j_spheres", type=int, default=1, show_default=True, help="Sphere count.")
@click.option("--variant", type=click.Choice(["1", "2"]), default="1", show_default=True)
@click.option(
    "--mode",
    type=click.Choice(["common", "general", "wsc-var", "wsc-fixed"]),
    default="common",
    show_default=True,
)
@click.option("--rate", type=float, default=None, help="Target bits/sample (wsc modes).")
@click.option("--composition", "compositions", multiple=True, help="Parts like 3,2,2 (repeatable).")
@click.option("--samples", type=int, default=500_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--g-lambda", default="scalar", show_default=True, help="Lattice second moment: scalar, lambda24, or a float.")
@click.option("--no-conjecture-filter", is_flag=True, help="Search all compositions, not just the monotone-pattern subset.")
@click.option("--out", type=click.Path(), default="codebook.json", show_default=True)
@click.option("--manifest", type=click.Path(), default=None, help="Manifest path (default OUT.manifest.json).")
def cmd_design(n, j_spheres, variant, mode, rate, compositions, samples, seed, sigma,
               g_lambda, no_conjecture_filter, out, manifest):
    """Design a codebook and write it with a run manifest."""
    started = time.monotonic()
    variant = int(variant)
    if mode in ("wsc-var", "wsc-fixed") and rate is None:
        raise click.UsageError(f"--rate is required for mode {mode}")
    if mode == "common" and len(compositions) != 1:
        raise click.UsageError("mode common needs exactly one --composition")
    if mode == "general" and not compositions:
        raise click.UsageError("mode general needs --composition (one per sphere, or one shared)")
    try:
        g_lambda_value = wsc.LATTICE_SECOND_MOMENTS.get(g_lambda)
        if g_lambda_value is None:
            try:
                g_lambda_value = float(g_lambda)
            except ValueError:
                raise click.UsageError(f"unknown --g-lambda {g_lambda!r}")
        cfg = DesignConfig(J=j_spheres, variant=variant, sample_count=samples, rng_seed=seed)
        filt = "none" if no_conjecture_filter else None
        table = (folded_order_stats if variant == 2 else gaussian_order_stats)(n, sigma)
        design_block: dict = {"mode": mode, "config": {
            "J": j_spheres, "variant": variant, "samples": samples, "seed": seed, "sigma": sigma,
        }}
        if mode == "common":
            comp = _parse_composition(compositions[0])
            result = design_common_composition(comp, cfg, table)
            code = result.code
            design_block.update(iterations=result.iterations, empirical_D=result.distortion,
                                converged=result.converged)
        elif mode == "general":
            comps = [_parse_composition(c) for c in compositions]
            if len(comps) == 1:
                comps = comps * j_spheres
            if len(comps) != j_spheres:
                raise click.UsageError(f"{len(comps)} compositions for J={j_spheres}")
            result = lloyd_general(comps, cfg, table)
            code = result.code
            design_block.update(iterations=result.iterations, empirical_D=result.distortion,
                                converged=result.converged)
        else:
            designer = wsc.design_variable_rate if mode == "wsc-var" else wsc.design_fixed_rate
            kwargs = {"sigma": sigma, "filt": filt}
            if mode == "wsc-var":
                kwargs["g_lambda"] = g_lambda_value
            result = designer(n, j_spheres, rate, cfg, **kwargs)
            code = result.code
            design_block.update(iterations=result.lloyd.iterations, empirical_D=result.distortion,
                                report=result.report)
        if code.n != n:
            raise DesignInfeasibleError(f"compositions have dimension {code.n}, expected {n}")
    except ResourceLimitError as exc:
        click.echo(f"resource guard: {exc}", err=True)
        sys.exit(EXIT_RESOURCE_GUARD)
    except (DesignInfeasibleError, RuntimeError, ValueError) as exc:
        click.echo(f"design infeasible: {exc}", err=True)
        sys.exit(EXIT_DESIGN_INFEASIBLE)

    save_code(out, code, extra={"design": design_block})
    manifest = manifest or f"{out}.manifest.json"
    params = {
        "n": n, "J": j_spheres, "variant": variant, "mode": mode, "rate": rate,
        "composition": list(compositions), "samples": samples, "seed": seed,
        "sigma": sigma, "g_lambda": g_lambda, "no_conjecture_filter": no_conjecture_filter,
        "out": str(out),
    }
    argv = ["design", "--n", str(n), "--j", str(j_spheres), "--variant", str(variant),
            "--mode", mode, "--samples", str(samples), "--seed", str(seed),
            "--sigma", repr(sigma), "--g-lambda", str(g_lambda),
            "--out", str(out), "--manifest", str(manifest)]
    if rate is not None:
        argv += ["--rate", repr(rate)]
    for comp in compositions:
        argv += ["--composition", comp]
    if no_conjecture_filter:
        argv += ["--no-conjecture-filter"]
    _write_manifest(manifest, "design", argv, params, seed, [out], started)
    click.echo(f"wrote {out}")


def _read_vectors(path, n):
    rows = []
    with open(path) as fp:
        for line_no, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            values = line.split(",")
            if len(values) != n:
                click.echo(
                    f"row {line_no}: expected {n} values, got {len(values)}", err=True
                )
                sys.exit(EXIT_DIMENSION_MISMATCH)
            try:
                rows.append([float(v) for v in values])
            except ValueError as exc:
                click.echo(f"row {line_no}: {exc}", err=True)
                sys.exit(EXIT_DIMENSION_MISMATCH)
    return rows


@main.command("encode")
@click.option("--codebook", type=click.Path(exists=True), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="CSV, one vector per row.")
@click.option("--output", type=click.Path(), required=True, help="Encoded stream path.")
@click.option("--manifest", type=click.Path(), default=None)
def cmd_encode(codebook, input_path, output, manifest):
    """Encode vectors to the (sphere, rank) stream format."""
    started = time.monotonic()
    code = load_code(codebook)
    rows = _read_vectors(input_path, code.n)
    indices = [encode_cpc(np.asarray(row), code)[0] for row in rows]
    with open(output, "wb") as fp:
        write_stream(fp, code, indices)
    manifest = manifest or f"{output}.manifest.json"
    params = {"codebook": str(codebook), "input": str(input_path), "output": str(output)}
    argv = ["encode", "--codebook", str(codebook), "--input", str(input_path),
            "--output", str(output), "--manifest", str(manifest)]
    _write_manifest(manifest, "encode", argv, params, None, [output], started)
    click.echo(f"encoded {len(indices)} vectors")


@main.command("decode")
@click.option("--codebook", type=click.Path(exists=True), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--output", type=click.Path(), required=True, help="CSV of reconstructions.")
@click.option("--manifest", type=click.Path(), default=None)
def cmd_decode(codebook, input_path, output, manifest):
    """Reconstruct codewords from an encoded stream."""
    started = time.monotonic()
    code = load_code(codebook)
    try:
        with open(input_path, "rb") as fp:
            indices = read_stream(fp, code)
    except StreamError as exc:
        click.echo(f"corrupt stream: {exc}", err=True)
        sys.exit(EXIT_CORRUPT_STREAM)
    with open(output, "w", newline="\n") as fp:
        for idx in indices:
            fp.write(",".join(repr(float(v)) for v in decode(idx, code)) + "\n")
    manifest = manifest or f"{output}.manifest.json"
    params = {"codebook": str(codebook), "input": str(input_path), "output": str(output)}
    argv = ["decode", "--codebook", str(codebook), "--input", str(input_path),
            "--output", str(output), "--manifest", str(manifest)]
    _write_manifest(manifest, "decode", argv, params, None, [output], started)
    click.echo(f"decoded {len(indices)} vectors")


@main.command("eval")
@click.option("--codebook", "codebooks", type=click.Path(exists=True), multiple=True)
@click.option("--samples", type=int, default=500_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--baselines", default="", help="Comma list from: ecsq, ecusq, bound.")
@click.option("--fixed-rate", is_flag=True, help="Report the no-entropy-coding rate.")
@click.option("--threads", type=int, default=None, help="Worker threads (default CPC_THREADS or 1).")
@click.option("--output", type=click.Path(), default="rd.csv", show_default=True)
@click.option("--manifest", type=click.Path(), default=None)
def cmd_eval(codebooks, samples, seed, sigma, baselines, fixed_rate, threads, output, manifest):
    """Measure rate-distortion points and write them as CSV."""
    started = time.monotonic()
    wanted = [b.strip() for b in baselines.split(",") if b.strip()]
    unknown = set(wanted) - {"ecsq", "ecusq", "bound"}
    if unknown:
        raise click.UsageError(f"unknown baselines: {sorted(unknown)}")
    if not codebooks and not wanted:
        raise click.UsageError("nothing to evaluate: give --codebook and/or --baselines")
    points = []
    for path in codebooks:
        code = load_code(path)
        measured = evaluation.empirical_distortion(
            code, samples, seed, sigma=sigma, threads=threads
        )
        if measured.low_count_spheres:
            click.echo(
                f"warning: {path}: sphere(s) {list(measured.low_count_spheres)} "
                "hit fewer than 10 times; entropy estimate is unreliable",
                err=True,
            )
        if fixed_rate:
            rate = evaluation.rate_fixed(code)
        else:
            rate = evaluation.rate_variable(code, measured.probs)
        points.append(
            evaluation.RDPoint(
                method="cpc" if code.J > 1 else "pc",
                n=code.n,
                J=code.J,
                rate=rate,
                distortion=measured.distortion,
                stderr=measured.stderr,
                seed=seed,
                samples=samples,
            )
        )
    if "ecusq" in wanted:
        points.extend(evaluation.ecusq_curve(evaluation.DEFAULT_BASELINE_STEPS, sigma))
    if "ecsq" in wanted:
        points.extend(evaluation.ecsq_curve(evaluation.DEFAULT_BASELINE_STEPS, sigma))
    if "bound" in wanted:
        points.extend(evaluation.shannon_bound(evaluation.DEFAULT_BOUND_RATES, sigma))
    with open(output, "w", newline="\n") as fp:
        fp.write(evaluation.rd_points_to_csv(points))
    manifest = manifest or f"{output}.manifest.json"
    params = {
        "codebooks": [str(c) for c in codebooks], "samples": samples, "seed": seed,
        "sigma": sigma, "baselines": wanted, "fixed_rate": fixed_rate,
        "threads": threads, "output": str(output),
    }
    argv = ["eval", "--samples", str(samples), "--seed", str(seed), "--sigma", repr(sigma),
            "--output", str(output), "--manifest", str(manifest)]
    for path in codebooks:
        argv += ["--codebook", str(path)]
    if baselines:
        argv += ["--baselines", baselines]
    if fixed_rate:
        argv += ["--fixed-rate"]
    if threads is not None:
        argv += ["--threads", str(threads)]
    _write_manifest(manifest, "eval", argv, params, seed, [output], started)
    click.echo(f"wrote {output} ({len(points)} points)")


@main.command("ratepoints")
@click.option("--n-range", default="2:9", show_default=True, help="LO:HI inclusive.")
@click.option("--j-range", default="1:4", show_default=True, help="LO:HI inclusive.")
@click.option("--limit", type=int, default=50_000_000, show_default=True)
@click.option("--output", type=click.Path(), default="ratepoints.csv", show_default=True)
@click.option("--manifest", type=click.Path(), default=None)
def cmd_ratepoints(n_range, j_range, limit, output, manifest):
    """Count distinct fixed-rate points per (n, J)."""
    started = time.monotonic()
    rows = ["n,J,count"]
    try:
        for n in _parse_range(n_range):
            for j in _parse_range(j_range):
                rows.append(f"{n},{j},{rate_point_census(n, j, limit=limit).count}")
    except ResourceLimitError as exc:
        click.echo(f"resource guard: {exc}", err=True)
        sys.exit(EXIT_RESOURCE_GUARD)
    with open(output, "w", newline="\n") as fp:
        fp.write("\n".join(rows) + "\n")
    manifest = manifest or f"{output}.manifest.json"
    params = {"n_range": n_range, "j_range": j_range, "limit": limit, "output": str(output)}
    argv = ["ratepoints", "--n-range", n_range, "--j-range", j_range,
            "--limit", str(limit), "--output", str(output), "--manifest", str(manifest)]
    _write_manifest(manifest, "ratepoints", argv, params, None, [output], started)
    click.echo(f"wrote {output}")


@main.command("replay")
@click.argument("manifest_path", type=click.Path(exists=True))
def cmd_replay(manifest_path):
    """Re-run the command recorded in a manifest."""
    with open(manifest_path) as fp:
        doc = json.load(fp)
    argv = doc.get("argv")
    if not argv:
        raise click.UsageError("manifest does not carry a replayable argv")
    main.main(args=argv, standalone_mode=True)


if __name__ == "__main__":
    main()

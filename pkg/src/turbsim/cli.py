"""Command-line surface: dataset generation, validation suites, benchmarks,
basis fitting, and the HTTP service."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .checks import ALL_CHECKS
from .config import OpticalConfig, default_config, load_config
from .errors import TurbsimError
from .pipeline import basis_seed, bench_fieldgen, generate_dataset
from .psf import p2s_fit, save_basis, validation_error

log = logging.getLogger("turbsim")

_SUITES = {
    "structure": ("structure",),
    "otf": ("otf",),
    "tilt": ("tilt",),
    "energy": ("energy",),
    "oracle": ("oracle",),
}


def _load(config_path) -> OpticalConfig:
    if config_path is None:
        return default_config()
    return load_config(config_path)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool):
    """Dense-field atmospheric turbulence imaging simulator."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.argument("images", nargs=-1, required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--frames", type=click.IntRange(1), default=16, show_default=True)
@click.option("--save-fields", is_flag=True, help="Also dump coefficient fields.")
@click.option(
    "--mode",
    type=click.Choice(["ar", "frozen"]),
    default="ar",
    show_default=True,
    help="Temporal evolution model.",
)
@click.option("--basis-samples", type=click.IntRange(1), default=2048, show_default=True)
@click.option("--basis-components", type=click.IntRange(1), default=32, show_default=True)
def generate(
    images,
    config_path,
    seed,
    out_dir,
    frames,
    save_fields,
    mode,
    basis_samples,
    basis_components,
):
    """Render distorted frame sequences for IMAGES into --out."""
    config = _load(config_path)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(basis_seed(seed))))
    try:
        basis = p2s_fit(
            config, n_samples=basis_samples, n_components=basis_components, rng=rng
        )
        manifest = generate_dataset(
            config,
            images,
            frames,
            out_dir,
            seed,
            save_fields=save_fields,
            mode=mode,
            basis=basis,
            log=log,
        )
    except TurbsimError as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"wrote {len(manifest.entries)} sequences "
        f"({len(manifest.errors)} failed) to {out_dir}"
    )
    if manifest.errors:
        for err in manifest.errors:
            click.echo(f"  failed: {err['input']}: {err['error']}", err=True)
        sys.exit(1)


@main.command()
@click.argument("suite", type=click.Choice(sorted(_SUITES)))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None, help="CSV directory.")
def validate(suite, config_path, out_dir):
    """Run a statistical validation suite; exit 0 iff thresholds pass."""
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    failed = False
    for name in _SUITES[suite]:
        res = ALL_CHECKS[name](out_dir)
        status = "PASS" if res["passed"] else "FAIL"
        click.echo(f"[{status}] {res['name']}: {res['detail']}")
        failed = failed or not res["passed"]
    sys.exit(1 if failed else 0)


@main.command()
@click.option(
    "--sizes",
    default="128,256,512",
    show_default=True,
    help="Comma-separated image sizes for dense-field timing.",
)
@click.option(
    "--point-grids",
    default="8,16,32",
    show_default=True,
    help="Comma-separated point-grid sizes for split-step timing.",
)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None, help="CSV file.")
def bench(sizes, point_grids, config_path, out_path):
    """Time dense-field generation against the split-step baseline."""
    from .splitstep import build_plan, splitstep_benchmark

    config = _load(config_path)
    try:
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
        grid_list = [int(s) for s in point_grids.split(",") if s.strip()]
    except ValueError:
        raise click.UsageError("sizes must be comma-separated integers")
    if not size_list:
        raise click.UsageError("at least one size is required")
    if any(s > 4096 for s in size_list):
        raise click.UsageError("dense-field sizes beyond 4096 are not supported")
    if any(g > 64 for g in grid_list):
        raise click.UsageError("split-step point grids beyond 64 are not supported")

    rows = []
    for r in bench_fieldgen(config, size_list):
        rows.append(("dense-field", r["width"], r["seconds_per_frame"]))
        click.echo(
            f"dense-field {r['width']}x{r['height']}: "
            f"{r['seconds_per_frame']*1e3:.1f} ms/frame"
        )
    if grid_list:
        plan = build_plan(config if config.d_over_r0 > 0 else default_config())
        for r in splitstep_benchmark(plan, grid_list):
            rows.append(("split-step", r["width"], r["seconds_per_frame"]))
            click.echo(
                f"split-step {r['width']}x{r['height']} points: "
                f"{r['seconds_per_frame']:.2f} s/frame"
            )
    if out_path:
        with open(out_path, "w") as fh:
            fh.write("method,size,seconds_per_frame\n")
            for method, size, sec in rows:
                fh.write(f"{method},{size},{sec:.6f}\n")


@main.command(name="fit-basis")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--samples", type=click.IntRange(1), default=2048, show_default=True)
@click.option("--components", type=click.IntRange(1), default=32, show_default=True)
def fit_basis(config_path, seed, out_path, samples, components):
    """Fit the PSF basis for a config and write it to --out."""
    config = _load(config_path)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(basis_seed(seed))))
    try:
        basis = p2s_fit(config, n_samples=samples, n_components=components, rng=rng)
    except TurbsimError as exc:
        raise click.ClickException(str(exc))
    save_basis(basis, out_path)
    val = validation_error(basis)
    extra = f", holdout rel err {val:.4f}" if val is not None else ""
    click.echo(
        f"fitted {basis.n_components} components "
        f"(residual energy {basis.residual_energy:.2e}{extra}) -> {out_path}"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--port", type=click.IntRange(1, 65535), default=8765, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config_path, seed, port, host):
    """Serve the HTTP/WebSocket API (and the UI bundle when built)."""
    import uvicorn

    from .service import create_app

    config = _load(config_path)
    static = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(config, seed=seed, static_dir=static if static.is_dir() else None)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command(name="show-config")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def show_config(config_path):
    """Print the effective config as JSON."""
    click.echo(json.dumps(json.loads(_load(config_path).to_json()), indent=2))


if __name__ == "__main__":
    main()

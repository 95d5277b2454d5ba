"""Command-line surface: import, mosaic, demosaic, train, crossval, psnr, preview.

Every subcommand is a thin shell over the library operations. Exit codes:
0 success, 1 usage errors, 2 data errors (malformed files, shape or config
mismatches).
"""

from __future__ import annotations

from pathlib import Path

import click
import numpy as np

from . import io as msio
from .classic import bilinear_demosaic, ppi_demosaic
from .cube import MosaicImage, SpectralCube, default_pattern
from .metrics import band_psnrs, psnr
from .mosaic import apply_msfa
from .net3d import NetworkConfig, network_forward
from .train import TrainPlan, crossval_run, demosaic_training_pairs, fit, make_folds, train_keys


@click.group()
def cli() -> None:
    """Multispectral filter-array demosaicking toolkit."""


def _load_pattern(pattern_path, fallback=None):
    if pattern_path is not None:
        return msio.read_pattern(pattern_path)
    if fallback is not None and Path(fallback).exists():
        return msio.read_pattern(fallback)
    return default_pattern()


def _load_dataset(data_dir) -> dict[str, SpectralCube]:
    files = sorted(Path(data_dir).glob("*.msc"))
    if not files:
        raise ValueError(f"no .msc cube files in {data_dir}")
    return {f.stem: msio.read_cube(f) for f in files}


@cli.command("import")
@click.option("--dir", "directory", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--bands", required=True, help="Comma-separated band file names, in band order.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def import_cmd(directory, bands, out_path):
    """Stack per-band graymap images into a cube file."""
    band_order = [name.strip() for name in bands.split(",") if name.strip()]
    if not band_order:
        raise click.UsageError("--bands lists no file names")
    cube = msio.import_band_images(directory, band_order)
    msio.write_cube(out_path, cube)
    click.echo(f"wrote {out_path} ({cube.bands}x{cube.height}x{cube.width})")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pattern", "pattern_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def mosaic(in_path, pattern_path, out_path):
    """Sample a cube through a filter-array pattern.

    The mosaic is stored as a 1-band cube file plus a pattern sidecar at
    <out>.pat. Without --pattern the stock 16-band pattern is used.
    """
    cube = msio.read_cube(in_path)
    pattern = _load_pattern(pattern_path)
    mosaicked = apply_msfa(cube, pattern)
    msio.write_cube(out_path, SpectralCube(mosaicked.samples[None]))
    msio.write_pattern(f"{out_path}.pat", pattern)
    click.echo(f"wrote {out_path} and {out_path}.pat")


def _read_mosaic(in_path, pattern_path) -> MosaicImage:
    cube = msio.read_cube(in_path)
    if cube.bands != 1:
        raise ValueError(f"{in_path} has {cube.bands} bands, expected a 1-band mosaic")
    pattern = _load_pattern(pattern_path, fallback=f"{in_path}.pat")
    return MosaicImage(cube.data[0], pattern)


@cli.command()
@click.option("--method", required=True, type=click.Choice(["bilinear", "ppi", "net"]))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pattern", "pattern_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def demosaic(method, in_path, pattern_path, checkpoint_path, out_path):
    """Reconstruct a full cube from a mosaic.

    The pattern is read from --pattern or the <in>.pat sidecar. Method "net"
    runs bilinear interpolation first and refines it with the checkpointed
    network.
    """
    mosaicked = _read_mosaic(in_path, pattern_path)
    if method == "bilinear":
        cube = bilinear_demosaic(mosaicked)
    elif method == "ppi":
        cube = ppi_demosaic(mosaicked)
    else:
        if checkpoint_path is None:
            raise click.UsageError("--method net requires --checkpoint")
        ck = msio.read_checkpoint(checkpoint_path)
        initial = bilinear_demosaic(mosaicked)
        cube, _ = network_forward(ck.config, ck.params, initial)
    msio.write_cube(out_path, cube)
    click.echo(f"wrote {out_path}")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--pattern", "pattern_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--epochs", default=300, show_default=True, type=click.IntRange(min=0))
@click.option("--steps", type=click.IntRange(min=1), help="Stop after this many optimizer steps instead of --epochs.")
@click.option("--batch", default=8, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def train(data_dir, pattern_path, config_path, epochs, steps, batch, seed, out_path):
    """Train the refinement network on a directory of cube files.

    Each cube is mosaicked, bilinear-demosaicked, and split into 4x4
    sub-images; training pairs the bilinear initial tiles with ground truth.
    """
    dataset = _load_dataset(data_dir)
    pattern = _load_pattern(pattern_path)
    config = NetworkConfig() if config_path is None else msio.load_config(config_path)
    pairs = []
    for image_id in dataset:
        pairs.extend(demosaic_training_pairs(dataset[image_id], pattern))
    plan = TrainPlan(epochs=epochs, batch_size=batch, shuffle_seed=seed)
    init_key, shuffle_key = train_keys(seed)
    result = fit(
        config, pairs, plan, init_seed=init_key, shuffle_key=shuffle_key, max_steps=steps
    )
    msio.write_checkpoint(
        out_path,
        config,
        result.params,
        state=result.state,
        seed=seed,
        epoch=len(result.epoch_losses),
    )
    last = f"{result.epoch_losses[-1]:.3e}" if result.epoch_losses else "n/a"
    click.echo(
        f"wrote {out_path} after {result.state.t} steps "
        f"({len(result.epoch_losses)} epochs, final loss {last})"
    )


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--pattern", "pattern_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--folds", default=8, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--epochs", default=300, show_default=True, type=click.IntRange(min=0))
@click.option("--batch", default=8, show_default=True, type=click.IntRange(min=1))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
def crossval(data_dir, pattern_path, config_path, folds, seed, epochs, batch, report_path):
    """k-fold cross-validation; writes a CSV of per-image PSNR plus averages."""
    dataset = _load_dataset(data_dir)
    pattern = _load_pattern(pattern_path)
    config = NetworkConfig() if config_path is None else msio.load_config(config_path)
    fold_groups = make_folds(list(dataset.keys()), folds, seed)
    plan = TrainPlan(
        epochs=epochs, batch_size=batch, shuffle_seed=seed, folds=tuple(map(tuple, fold_groups))
    )
    report = crossval_run(dataset, pattern, config, plan)
    msio.write_report(report_path, report)
    click.echo(f"wrote {report_path} ({len(report.rows)} images)")


@cli.command("psnr")
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--per-band", is_flag=True, help="Average per-band dB instead of whole-cube dB.")
def psnr_cmd(ref_path, test_path, per_band):
    """Print the PSNR between two cube files in dB."""
    reference = msio.read_cube(ref_path)
    test = msio.read_cube(test_path)
    if per_band:
        values = band_psnrs(reference, test)
        value = float(np.mean(values))
    else:
        value = psnr(reference, test)
    click.echo("inf" if np.isinf(value) else f"{value:.4f}")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--band", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def preview(in_path, band, out_path):
    """Write one band plane as an 8-bit graymap for quick inspection."""
    cube = msio.read_cube(in_path)
    if not 0 <= band < cube.bands:
        raise IndexError(f"band {band} out of range [0, {cube.bands})")
    msio.write_pgm(out_path, cube.data[band])
    click.echo(f"wrote {out_path}")


def main(argv=None) -> int:
    """Entry point with the toolkit's exit-code contract."""
    try:
        cli.main(args=argv, prog_name="msdemosaic", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (OSError, ValueError, IndexError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

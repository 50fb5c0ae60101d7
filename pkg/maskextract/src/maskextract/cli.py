"""Command-line interface: mask extraction and dataset conversion."""

from __future__ import annotations

import sys

import click

from .backends import IntensityRegionBackend, SamBackend
from .convert import convert_3rscan
from .extract import SOURCES, ExtractionConfig, extract


@click.group()
def main() -> None:
    """Produce 2D instance masks and scan manifests for change detection."""


@main.command("extract")
@click.option("--images", required=True, type=click.Path(exists=True, file_okay=False),
              help="Scene directory holding color/ and/or depth/ subdirectories.")
@click.option("--source", type=click.Choice(SOURCES), default="color", show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--grid-side", default=32, show_default=True,
              help="Prompt grid points per side (sam backend).")
@click.option("--crop-levels", default=None, type=int,
              help="Crop layers for the mask generator; omit for the model default.")
@click.option("--backend", "backend_name", type=click.Choice(("sam", "regions")),
              default="sam", show_default=True)
@click.option("--weights", type=click.Path(), default=None,
              help="Path to a SAM checkpoint (sam backend).")
def extract_command(images, source, out, grid_side, crop_levels, backend_name, weights):
    """Segment every image and write 16-bit label maps."""
    try:
        config = ExtractionConfig(images=images, source=source, grid_side=grid_side,
                                  crop_levels=crop_levels, out=out)
        if backend_name == "regions":
            backend = IntensityRegionBackend()
        else:
            backend = SamBackend(weights=weights, grid_side=grid_side,
                                 crop_levels=crop_levels)
    except (ValueError, FileNotFoundError, ImportError) as exc:
        raise click.UsageError(str(exc))
    try:
        patch = extract(config, backend)
    except (ValueError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for src, entries in patch.items():
        click.echo(f"{src}: {len(entries)} label maps under {config.out}")
    click.echo(f"manifest patch: {config.out / 'label_paths.json'}")


@main.command("convert-3rscan")
@click.option("--scene", required=True, type=click.Path(exists=True, file_okay=False),
              help="Scene directory with reference/, rescan/, and changes.json.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def convert_command(scene, out):
    """Rewrite a 3RScan-style scene as an engine manifest."""
    try:
        manifest = convert_3rscan(scene, out)
    except (ValueError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {manifest}")


if __name__ == "__main__":
    main()

"""Command line wrapper: one invocation exports all three stores."""

from __future__ import annotations

import sys

import click

from .encoders import EncodeError, load_encoder
from .export import ExportError, ExportJob, export_all


@click.command()
@click.option("--corpus", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--text-out", required=True, type=click.Path(dir_okay=False))
@click.option("--image-out", required=True, type=click.Path(dir_okay=False))
@click.option("--query-out", required=True, type=click.Path(dir_okay=False))
@click.option("--encoder", "encoder_spec", default="hashing",
              show_default=True,
              help="'hashing' or a sentence-transformers checkpoint name.")
@click.option("--dim", default=128, show_default=True,
              help="Embedding width (hashing encoder only).")
@click.option("--max-tokens", default=256, show_default=True)
@click.option("--image-root", type=click.Path(file_okay=False),
              help="Directory that relative image refs resolve against.")
@click.option("--batch-size", default=32, show_default=True)
@click.option("--device", default="cpu", show_default=True)
def main(corpus, text_out, image_out, query_out, encoder_spec, dim,
         max_tokens, image_root, batch_size, device):
    """Encode a corpus and emit DEMB text/image/query stores."""
    try:
        encoder = load_encoder(encoder_spec, dim=dim, max_tokens=max_tokens,
                               device=device)
    except (EncodeError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    job = ExportJob(corpus_path=corpus, text_out=text_out,
                    image_out=image_out, query_out=query_out,
                    batch_size=batch_size, image_root=image_root)
    try:
        reports = export_all(job, encoder)
    except (ExportError, EncodeError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    for kind, rep in reports.items():
        click.echo(f"{kind}: {rep.exported} vectors "
                   f"({len(rep.skipped)} skipped)")


if __name__ == "__main__":
    main()

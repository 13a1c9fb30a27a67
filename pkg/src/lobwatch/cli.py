"""Command line entry points for the full pipeline: simulate, label, train,
evaluate, scan, rank, serve, oracle-annotate."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional

import click

from .labeler import LabelerParams
from .simgen import SimConfig

log = logging.getLogger(__name__)


def _load_json(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; keys depend on the subcommand.")
@click.option("--seed", type=int, default=None, help="Override the run seed.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output path (meaning depends on the subcommand).")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str], seed: Optional[int],
         out_path: Optional[str]) -> None:
    """Spoofing surveillance over synthetic limit-order-book sessions."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_json(config_path)
    ctx.obj["seed"] = seed
    ctx.obj["out"] = out_path


def _sim_config(ctx: click.Context) -> SimConfig:
    raw = dict(ctx.obj.get("config", {}))
    raw = {k: v for k, v in raw.items() if k in SimConfig.__dataclass_fields__}
    cfg = SimConfig(**raw)
    if ctx.obj.get("seed") is not None:
        cfg.seed = ctx.obj["seed"]
    return cfg


def _labeler_params(ctx: click.Context) -> LabelerParams:
    raw = ctx.obj.get("config", {}).get("labeler", {})
    return LabelerParams.from_json(raw) if raw else LabelerParams()


@main.command()
@click.pass_context
def simulate(ctx: click.Context) -> None:
    """Generate feed files plus episode ground truth into --out."""
    from .pipeline import simulate_to_dir

    out = ctx.obj.get("out") or "simdata"
    cfg = _sim_config(ctx)
    summary = simulate_to_dir(cfg, out)
    click.echo(json.dumps({"out": str(out), **summary}))


@main.command()
@click.option("--feed", required=True, type=click.Path(exists=True),
              help="Feed file or directory of *.lob1 files.")
@click.option("--n", default=10, show_default=True, help="Frames per window.")
@click.option("--stride", default=5, show_default=True)
@click.pass_context
def label(ctx: click.Context, feed: str, n: int, stride: int) -> None:
    """Weak-label a feed and write a window dataset (JSONL) to --out."""
    from .feedio import write_dataset
    from .pipeline import load_feed_events, windows_from_stream

    params = _labeler_params(ctx)
    out = ctx.obj.get("out") or "dataset.jsonl"
    samples = []
    for iid, events in sorted(load_feed_events(feed).items()):
        samples.extend(windows_from_stream(events, params, n, stride, iid))
    count = write_dataset(samples, out)
    click.echo(json.dumps({"out": out, "windows": count}))


@main.command()
@click.option("--feed", required=True, type=click.Path(exists=True))
@click.option("--classes", "-c", default=3, type=click.IntRange(2, 3), show_default=True)
@click.option("--embed-dim", default=256, show_default=True)
@click.option("--epochs", default=20, show_default=True)
@click.option("--n", default=10, show_default=True)
@click.pass_context
def train(ctx: click.Context, feed: str, classes: int, embed_dim: int,
          epochs: int, n: int) -> None:
    """Train a classifier on a feed (time split, variant validation labels)."""
    from .pipeline import load_feed_events, prepare_datasets, train_task
    from .training import Hyper, save_checkpoint

    seed = ctx.obj.get("seed") or 0
    out = ctx.obj.get("out") or f"model_c{classes}"
    params = _labeler_params(ctx)
    streams = load_feed_events(feed)
    data = prepare_datasets(streams, classes, params, n=n, seed=seed)
    best, config, history, metrics = train_task(
        data, classes, embed_dim, seed, Hyper(epochs=epochs, shuffle_seed=seed)
    )
    save_checkpoint(out, best, config, {"qty_scale": data.qty_scale}, metrics)
    click.echo(json.dumps({"checkpoint": out, "epochs": len(history),
                           "val": {k: metrics[k] for k in ("accuracy", "macro_f1")}}))


@main.command()
@click.option("--feed", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--n", default=10, show_default=True)
@click.pass_context
def evaluate(ctx: click.Context, feed: str, checkpoint: str, n: int) -> None:
    """Evaluate a checkpoint on a feed's variant-labeled validation split."""
    from .pipeline import load_feed_events, prepare_datasets
    from .training import evaluate as run_eval
    from .training import load_checkpoint

    params, config, norm, _ = load_checkpoint(checkpoint)
    data = prepare_datasets(
        load_feed_events(feed), config.classes, _labeler_params(ctx), n=n,
        seed=ctx.obj.get("seed") or 0,
    )
    metrics = run_eval(params, config, data.val_x, data.val_y)
    click.echo(json.dumps(metrics))


@main.command()
@click.option("--feed", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--threshold", default=0.7, show_default=True)
@click.pass_context
def scan(ctx: click.Context, feed: str, checkpoint: str, data_dir: str,
         threshold: float) -> None:
    """Scan a feed into persisted, ranked alerts."""
    from .pipeline import load_feed_events, scan_events
    from .service import SurveillanceStore
    from .training import load_checkpoint

    params, config, norm, _ = load_checkpoint(checkpoint)
    store = SurveillanceStore(data_dir)
    result = scan_events(
        load_feed_events(feed), params, config, float(norm["qty_scale"]),
        threshold=threshold,
    )
    for alert in result.alerts:
        store.add_alert(
            alert.alert_id, alert.window_ref, alert.predicted_label,
            alert.model_score, result.frames[alert.alert_id],
            result.embeddings[alert.alert_id],
        )
    store.refresh_ranking()
    click.echo(json.dumps({"alerts": len(result.alerts),
                           "windows_scanned": result.windows_scanned}))


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--limit", default=20, show_default=True)
def rank(data_dir: str, limit: int) -> None:
    """Re-rank stored alerts against the current exemplar store."""
    from .service import SurveillanceStore

    store = SurveillanceStore(data_dir)
    store.refresh_ranking()
    for record in store.list_alerts(limit=limit):
        click.echo(json.dumps(record.summary()))


@main.command("oracle-annotate")
@click.option("--feed", required=True, type=click.Path(exists=True),
              help="Feed the alerts were scanned from (oracle needs raw events).")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--limit", default=None, type=int,
              help="Annotate at most this many New alerts.")
@click.pass_context
def oracle_annotate(ctx: click.Context, feed: str, data_dir: str,
                    limit: Optional[int]) -> None:
    """Let the expert-substitute algorithm annotate New alerts."""
    from .oracle import oracle_findings
    from .book import Side
    from .pipeline import load_feed_events, reconstruct
    from .service import STATUS_NEW, SurveillanceStore

    params = _labeler_params(ctx)
    store = SurveillanceStore(data_dir)
    streams = load_feed_events(feed)
    findings = {}
    for iid, events in streams.items():
        frames, _ = reconstruct(events, instrument_id=iid)
        findings[iid] = oracle_findings(events, frames, params)
    annotated = 0
    for record in store.list_alerts(status=STATUS_NEW):
        if limit is not None and annotated >= limit:
            break
        iid = record.window_ref["instrument_id"]
        t_lo = record.window_ref.get("t_start", record.window_ref["t_end"])
        t_hi = record.window_ref["t_end"]
        hits = [f for f in findings.get(iid, [])
                if f.first_ts <= t_hi and f.last_ts >= t_lo]
        if hits:
            best = max(hits, key=lambda f: f.total_qty)
            label_value = 1 if best.side == Side.BID else 2
            store.annotate(record.alert_id, label_value, source="Oracle",
                           rationale=list(best.tags))
        else:
            store.annotate(record.alert_id, 0, source="Oracle")
        annotated += 1
    click.echo(json.dumps({"annotated": annotated,
                           "exemplars": len(store.exemplars)}))


@main.command()
@click.option("--port", default=8080, show_default=True)
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--checkpoint", default=None, type=click.Path(),
              help="Checkpoint stem enabling POST /scan.")
@click.option("--ui-dir", default=None, type=click.Path(),
              help="Built frontend directory to serve under /ui.")
def serve(port: int, data_dir: str, checkpoint: Optional[str],
          ui_dir: Optional[str]) -> None:
    """Run the surveillance HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(data_dir, checkpoint, ui_dir)
    uvicorn.run(app, host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()

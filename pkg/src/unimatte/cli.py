"""Command-line entry points for corpus synthesis, training, evaluation,
single-image prediction, and the HTTP service.

Every training/evaluation run writes a reproducibility stamp next to its
outputs: the hash of the resolved config, the seed, and the hash of the
corpus manifest. Options can be supplied via UNIMATTE_* environment
variables (e.g. UNIMATTE_TRAIN_SEED=7).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np
import yaml

from . import data as data_mod
from . import metrics as metrics_mod
from . import synthetic, training
from .imaging import load_image, save_alpha
from .interactions import Interaction, InteractionKind, encode_guidance
from .model import (
    ModelConfig,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
)

INTERACTION_NAMES = [k.value for k in InteractionKind]


def _hash_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _write_stamp(out_dir: Path, command: str, config_obj, seed: int, corpus_manifest=None) -> None:
    stamp = {
        "command": command,
        "config_hash": _hash_text(yaml.safe_dump(config_obj, sort_keys=True)),
        "seed": seed,
        "corpus_hash": _hash_file(corpus_manifest) if corpus_manifest else None,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}.stamp.json").write_text(json.dumps(stamp, indent=2))


def _parse_ratio(text: str) -> tuple[int, int, int, int]:
    parts = text.split(":")
    if len(parts) != 4:
        raise click.BadParameter("expected four colon-separated counts, e.g. 310:140:280:75")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def _load_train_config(config_path, **overrides) -> training.TrainConfig:
    if config_path:
        cfg = training.TrainConfig.from_yaml(config_path)
    else:
        cfg = training.TrainConfig()
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.__post_init__()
    return cfg


@click.group(context_settings={"auto_envvar_prefix": "UNIMATTE"})
def main():
    """Interactive image matting toolkit."""


@main.command("make-assets")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--n-so-fg", default=8, show_default=True)
@click.option("--n-st-fg", default=6, show_default=True)
@click.option("--n-bg", default=12, show_default=True)
@click.option("--size", default=128, show_default=True)
@click.option("--seed", default=0, show_default=True)
def make_assets(out, n_so_fg, n_st_fg, n_bg, size, seed):
    """Generate synthetic foreground/background PNG pools."""
    counts = synthetic.write_asset_dirs(out, n_so_fg, n_st_fg, n_bg, size, seed)
    click.echo(f"assets written to {out}: {counts}")


@main.command()
@click.option("--fg-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--bg-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--per-fg", default=4, show_default=True, help="backgrounds per foreground (training corpus mode)")
@click.option("--unified-ratio", default=None, help='SO:ST:NSO:NST counts, e.g. "310:140:280:75" (test corpus mode)')
@click.option("--seed", default=0, show_default=True)
def synth(fg_dir, bg_dir, out, per_fg, unified_ratio, seed):
    """Build a composited corpus with a manifest.

    Training mode composes every foreground under FG_DIR (expects image/ and
    alpha/ subdirectories, or fg_so/ + fg_st/ pools) with --per-fg distinct
    backgrounds. With --unified-ratio, builds the category-balanced test set
    instead; FG_DIR then needs fg_so/ and fg_st/ pools and BG_DIR needs
    bg_so/ and bg_st/ (a flat PNG directory is split in half).
    """
    out = Path(out)
    if unified_ratio is not None:
        counts = _parse_ratio(unified_ratio)
        so_fgs = data_mod.load_foreground_dir(fg_dir / "fg_so")
        st_fgs = data_mod.load_foreground_dir(fg_dir / "fg_st")
        if (bg_dir / "bg_so").is_dir():
            so_bgs = data_mod.load_background_dir(bg_dir / "bg_so")
            st_bgs = data_mod.load_background_dir(bg_dir / "bg_st")
        else:
            bgs = data_mod.load_background_dir(bg_dir)
            so_bgs, st_bgs = bgs[::2], bgs[1::2]
        try:
            manifest = data_mod.build_unified_testset(
                so_fgs, st_fgs, so_bgs, st_bgs, counts, seed, out
            )
        except ValueError as exc:
            raise click.ClickException(str(exc))
    else:
        if (fg_dir / "image").is_dir():
            fgs = data_mod.load_foreground_dir(fg_dir)
        else:
            pools = sorted(p for p in fg_dir.iterdir() if (p / "image").is_dir())
            if not pools:
                raise click.ClickException(
                    f"{fg_dir} holds neither image/+alpha/ nor foreground pool subdirectories"
                )
            fgs = []
            for pool in pools:
                fgs.extend(data_mod.load_foreground_dir(pool))
        if (bg_dir / "bg_so").is_dir():
            bgs = data_mod.load_background_dir(bg_dir / "bg_so") + data_mod.load_background_dir(
                bg_dir / "bg_st"
            )
        else:
            bgs = data_mod.load_background_dir(bg_dir)
        try:
            manifest = data_mod.build_composites(fgs, bgs, per_fg, seed, out)
        except ValueError as exc:
            raise click.ClickException(str(exc))
    _write_stamp(out, "synth", {"per_fg": per_fg, "unified_ratio": unified_ratio}, seed, out / "manifest.jsonl")
    click.echo(f"{len(manifest)} records -> {out / 'manifest.jsonl'}")
    click.echo(f"category counts: {manifest.category_counts()}")


def _interaction_option(required=True):
    return click.option(
        "--interaction",
        type=click.Choice(INTERACTION_NAMES),
        required=required,
        default=None if required else "bbox",
    )


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--interaction", type=click.Choice(INTERACTION_NAMES), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--crop", type=int, default=None)
@click.option("--widths", default="16,32,64,128", show_default=True)
def pretrain(corpus, out, config_path, interaction, seed, epochs, max_steps, crop, widths):
    """Consistency-pretrain the encoder on a shared-foreground corpus."""
    corpus = Path(corpus)
    out = Path(out)
    cfg = _load_train_config(
        config_path, stage="pretrain", interaction=interaction, seed=seed,
        epochs=epochs, max_steps=max_steps, crop=crop,
    )
    manifest = data_mod.Manifest.load(corpus / "manifest.jsonl")
    model_cfg = ModelConfig(
        guidance_kind=cfg.interaction,
        stage_widths=tuple(int(w) for w in widths.split(",")),
    )
    model = init_params(model_cfg, cfg.seed)
    result = training.pretrain_fc(cfg, corpus, manifest, model)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "encoder.ckpt", result.model, result.step, train_config=asdict(cfg))
    training.write_trace(out / "pretrain_trace.csv", result.trace)
    _write_stamp(out, "pretrain", asdict(cfg), cfg.seed, corpus / "manifest.jsonl")
    click.echo(f"pretrained {result.step} steps -> {out / 'encoder.ckpt'}")


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--interaction", type=click.Choice(INTERACTION_NAMES), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--crop", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--warmup-iters", type=int, default=None)
@click.option("--no-augment", is_flag=True, default=False)
@click.option("--init-checkpoint", type=click.Path(exists=True, path_type=Path), help="start from a pretrained encoder checkpoint")
@click.option("--widths", default="16,32,64,128", show_default=True)
def train(corpus, out, config_path, interaction, seed, epochs, max_steps, crop,
          batch_size, warmup_iters, no_augment, init_checkpoint, widths):
    """Train the full network end to end with the joint loss."""
    corpus = Path(corpus)
    out = Path(out)
    cfg = _load_train_config(
        config_path, stage="main", interaction=interaction, seed=seed, epochs=epochs,
        max_steps=max_steps, crop=crop, batch_size=batch_size, warmup_iters=warmup_iters,
        augment=False if no_augment else None,
    )
    manifest = data_mod.Manifest.load(corpus / "manifest.jsonl")
    if init_checkpoint:
        model, _ = load_checkpoint(init_checkpoint)
        if model.config.guidance_kind != cfg.interaction:
            raise click.ClickException(
                f"checkpoint guidance kind {model.config.guidance_kind} != --interaction {cfg.interaction}"
            )
    else:
        model_cfg = ModelConfig(
            guidance_kind=cfg.interaction,
            stage_widths=tuple(int(w) for w in widths.split(",")),
        )
        model = init_params(model_cfg, cfg.seed)
    result = training.train_main(cfg, corpus, manifest, model)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", result.model, result.step, train_config=asdict(cfg))
    training.write_trace(out / "train_trace.csv", result.trace)
    _write_stamp(out, "train", asdict(cfg), cfg.seed, corpus / "manifest.jsonl")
    status = "aborted on non-finite loss; last snapshot kept" if result.aborted else "done"
    click.echo(f"trained {result.step} steps ({status}) -> {out / 'model.ckpt'}")


@main.command("eval")
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path),
              help="checkpoint file, or a directory of per-kind {kind}.ckpt files for --interaction all")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--interaction", type=click.Choice(INTERACTION_NAMES + ["all"]), default="all", show_default=True)
@click.option("--region", type=click.Choice(["trimap_based", "trimap_free"]), default="trimap_free", show_default=True)
@click.option("--unknown-band", type=int, default=metrics_mod.DEFAULT_UNKNOWN_BAND, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--limit-per-category", type=int, default=None, help="evaluate at most N records per category")
def eval_cmd(corpus, checkpoint, out, interaction, region, unknown_band, seed, limit_per_category):
    """Evaluate a checkpoint; --interaction all sweeps every kind into one CSV."""
    corpus = Path(corpus)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = data_mod.Manifest.load(corpus / "manifest.jsonl", split="test")
    if limit_per_category is not None:
        kept, seen = [], {}
        for rec in manifest.records:
            tag = rec.category.value
            if seen.get(tag, 0) < limit_per_category:
                kept.append(rec)
                seen[tag] = seen.get(tag, 0) + 1
        manifest = data_mod.Manifest(records=kept, split="test")

    def model_for(kind: str):
        # each interaction kind has its own input channel count, hence its
        # own trained checkpoint
        path = checkpoint / f"{kind}.ckpt" if checkpoint.is_dir() else checkpoint
        if not path.exists():
            raise click.ClickException(f"no checkpoint for kind {kind}: {path} missing")
        model, _ = load_checkpoint(path)
        if model.config.guidance_kind != kind:
            raise click.ClickException(
                f"checkpoint {path} was trained for {model.config.guidance_kind}, not {kind}"
            )
        return model

    region_mode = metrics_mod.RegionMode(mode=region, unknown_band=unknown_band)
    kinds = INTERACTION_NAMES if interaction == "all" else [interaction]
    reports = []
    for kind in kinds:
        report = metrics_mod.evaluate(model_for(kind), corpus, manifest, kind, region_mode, seed)
        report.to_json(out / f"report_{kind}.json")
        report.to_csv(out / f"report_{kind}.csv")
        reports.append(report)
        click.echo(f"{kind}: overall {report.rows['overall']}")
    if interaction == "all":
        sweep_path = out / "report_sweep.csv"
        _write_sweep_csv(sweep_path, reports, region_mode)
        click.echo(f"sweep table -> {sweep_path}")
    _write_stamp(out, "eval", {"interaction": interaction, "region": region}, seed, corpus / "manifest.jsonl")


def _write_sweep_csv(path, reports, region_mode) -> None:
    """One row per interaction kind; metric columns grouped per category."""
    import csv

    categories = ["SO", "ST", "NSO", "NST", "overall"]
    metric_names = ["MSE", "SAD", "Grad", "Conn"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["# region_mode", region_mode.mode])
        header = ["interaction"]
        for cat in categories:
            header += [f"{cat}_{m}" for m in metric_names]
        writer.writerow(header)
        for report in reports:
            row = [report.interaction]
            for cat in categories:
                metric_row = report.rows.get(cat)
                if metric_row is None:
                    row += ["", "", "", ""]
                else:
                    row += [metric_row.mse, metric_row.sad, metric_row.grad, metric_row.conn]
            writer.writerow(row)


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--mask-out", type=click.Path(path_type=Path), default=None)
@click.option("--interaction", type=click.Choice(INTERACTION_NAMES), required=True)
@click.option("--box", default=None, help="r0,c0,r1,c1 (bbox interaction)")
@click.option("--point", default=None, help="row,col (fg_point interaction)")
@click.option("--trimap", "trimap_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--interaction-json", type=click.Path(exists=True, path_type=Path), default=None,
              help="full interaction JSON file (any kind)")
def predict_cmd(image_path, checkpoint, out, mask_out, interaction, box, point, trimap_path, interaction_json):
    """Predict an alpha matte for one image given an interaction."""
    image = load_image(image_path)
    h, w = image.shape[:2]
    if interaction_json:
        inter = Interaction.from_json(Path(interaction_json).read_text())
    elif interaction == "bbox":
        if not box:
            raise click.UsageError("--interaction bbox needs --box r0,c0,r1,c1")
        r0, c0, r1, c1 = (int(v) for v in box.split(","))
        inter = Interaction(kind=InteractionKind.BBOX, box=(r0, c0, r1, c1))
    elif interaction == "fg_point":
        if not point:
            raise click.UsageError("--interaction fg_point needs --point row,col")
        r, c = (int(v) for v in point.split(","))
        inter = Interaction(kind=InteractionKind.FG_POINT, points=((r, c, "fg"),))
    elif interaction == "trimap":
        if not trimap_path:
            raise click.UsageError("--interaction trimap needs --trimap PNG")
        from .imaging import load_trimap

        inter = Interaction(kind=InteractionKind.TRIMAP, trimap=load_trimap(trimap_path))
    else:
        raise click.UsageError(
            f"--interaction {interaction} requires --interaction-json with full geometry"
        )
    model, _ = load_checkpoint(checkpoint)
    guidance = encode_guidance(inter, h, w)
    mask, alpha = predict(model, image, guidance)
    save_alpha(out, alpha)
    if mask_out:
        save_alpha(mask_out, mask)
    _write_stamp(
        Path(out).parent, "predict",
        {"checkpoint": _hash_file(checkpoint), "interaction": inter.to_dict()},
        seed=0,
    )
    click.echo(f"alpha -> {out}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--max-pixels", default=4_194_304, show_default=True)
@click.option("--idle-timeout", default=1800.0, show_default=True)
def serve(checkpoint, host, port, max_pixels, idle_timeout):
    """Run the interactive prediction HTTP service."""
    import uvicorn

    from .service import create_app_from_checkpoint

    app = create_app_from_checkpoint(
        checkpoint, max_pixels=max_pixels, idle_timeout_s=idle_timeout
    )
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()

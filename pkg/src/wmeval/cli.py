"""Command-line front end wiring the scoring pipeline together.

Exit codes: 0 on success, 1 on bad input (unknown flags, malformed
files, domain errors), 2 on unexpected internal failures.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, replace

import click

from .errors import ParameterError, WmevalError
from .grpo import (GrpoConfig, SyntheticPolicy, ideal_factors, mle_warm_start,
                   train, with_format_probability)
from .imageops import (DistortionSpec, DISTORTION_KINDS, PsnrNormalization,
                       RasterImage, apply_distortion, psnr)
from .labeler import (DEFAULT_DISTORTIONS, ResidualLabel, RobustnessReport,
                      ScoreThresholds, residual_label_record,
                      residual_quality_label, residual_security_labels,
                      semantic_label, semantic_label_record)
from .latent_stats import load_latents, run_all_tests
from .metrics import build_report, report_csv, report_table
from .response_format import (CATEGORIES, CATEGORY_LOSSLESS,
                              CATEGORY_RESIDUAL, FormatVerdict, parse)
from .reward import (RewardConfig, breakdown_record, ground_truth_from_record,
                     total_reward)
from .watermark import (EmbedConfig, WatermarkMessage, bit_accuracy, embed,
                        extract)


@dataclass(frozen=True)
class PipelineConfig:
    """Defaults shared by the subcommands; any flag overrides its field."""

    thresholds: ScoreThresholds = ScoreThresholds()
    psnr_norm: PsnrNormalization = PsnrNormalization()
    reward: RewardConfig = RewardConfig()
    grpo: GrpoConfig = GrpoConfig()
    distortions: tuple = DEFAULT_DISTORTIONS
    embed: EmbedConfig = EmbedConfig()
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        kwargs = {}
        if "thresholds" in data:
            kwargs["thresholds"] = ScoreThresholds(**data["thresholds"])
        if "psnr_norm" in data:
            kwargs["psnr_norm"] = PsnrNormalization(**data["psnr_norm"])
        if "reward" in data:
            kwargs["reward"] = RewardConfig(**data["reward"])
        if "grpo" in data:
            kwargs["grpo"] = GrpoConfig(**data["grpo"])
        if "distortions" in data:
            kwargs["distortions"] = tuple(DistortionSpec(**d)
                                          for d in data["distortions"])
        if "embed" in data:
            kwargs["embed"] = EmbedConfig(**data["embed"])
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        return cls(**kwargs)


def _load_config(path, seed) -> PipelineConfig:
    if path is None:
        cfg = PipelineConfig()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParameterError(f"config {path}: {exc}") from None
        cfg = PipelineConfig.from_dict(data)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    return cfg


def _read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParameterError(f"{path}:{lineno}: {exc}") from None
    return rows


def _emit(text: str, out_path) -> None:
    if out_path is None:
        click.echo(text, nl=not text.endswith("\n"))
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _emit_jsonl(rows, out_path) -> None:
    _emit("\n".join(json.dumps(r) for r in rows), out_path)


@click.group()
@click.option("--config", "config_path", metavar="PATH", default=None,
              help="JSON pipeline config supplying defaults.")
@click.option("--seed", type=int, default=None,
              help="Override the config seed.")
@click.pass_context
def cli(ctx, config_path, seed):
    """Watermark evaluation toolkit."""
    ctx.obj = _load_config(config_path, seed)


@cli.command()
@click.option("-i", "--input", "input_path", required=True, metavar="PNG")
@click.option("-o", "--output", "output_path", required=True, metavar="PNG")
@click.option("--kind", type=click.Choice(DISTORTION_KINDS), required=True)
@click.option("--jpeg-quality", type=int, default=None)
@click.option("--noise-sigma", type=float, default=None)
@click.option("--kernel-size", type=int, default=None)
@click.pass_obj
def distort(cfg: PipelineConfig, input_path, output_path, kind, jpeg_quality,
            noise_sigma, kernel_size):
    """Apply one distortion channel to a PNG."""
    defaults = {d.kind: d for d in cfg.distortions}
    base = defaults.get(kind, DistortionSpec(kind))
    spec = DistortionSpec(
        kind=kind,
        jpeg_quality=base.jpeg_quality if jpeg_quality is None else jpeg_quality,
        noise_sigma=base.noise_sigma if noise_sigma is None else noise_sigma,
        kernel_size=base.kernel_size if kernel_size is None else kernel_size)
    img = RasterImage.load_png(input_path)
    apply_distortion(img, spec, seed=cfg.seed).save_png(output_path)


@cli.command(name="psnr")
@click.option("-a", "image_a", required=True, metavar="PNG")
@click.option("-b", "image_b", required=True, metavar="PNG")
@click.option("--out", "out_path", default=None, metavar="PATH")
def psnr_cmd(image_a, image_b, out_path):
    """PSNR between two equally sized PNGs, in dB."""
    value = psnr(RasterImage.load_png(image_a), RasterImage.load_png(image_b))
    record = {"psnr_db": "inf" if math.isinf(value) else value}
    _emit(json.dumps(record), out_path)


@cli.group()
def wm():
    """Reference watermark: embed into and extract from PNGs."""


def _embed_config(cfg: PipelineConfig, strength, coeff_index) -> EmbedConfig:
    return EmbedConfig(
        strength=cfg.embed.strength if strength is None else strength,
        coeff_index=cfg.embed.coeff_index if coeff_index is None else coeff_index)


@wm.command(name="embed")
@click.option("-i", "--input", "input_path", required=True, metavar="PNG")
@click.option("-o", "--output", "output_path", required=True, metavar="PNG")
@click.option("--bits", "bits_hex", default=None, metavar="HEX",
              help="Payload bits as hex; --n-bits selects how many count.")
@click.option("--n-bits", type=int, required=True)
@click.option("--random", "random_bits", is_flag=True,
              help="Draw the payload from the seeded generator instead.")
@click.option("--strength", type=float, default=None)
@click.option("--coeff-index", type=int, default=None)
@click.pass_obj
def wm_embed(cfg: PipelineConfig, input_path, output_path, bits_hex, n_bits,
             random_bits, strength, coeff_index):
    """Embed a payload; prints the payload actually embedded."""
    if random_bits == (bits_hex is not None):
        raise ParameterError("give exactly one of --bits or --random")
    if random_bits:
        msg = WatermarkMessage.random(n_bits, seed=cfg.seed)
    else:
        msg = WatermarkMessage.from_hex(bits_hex, n_bits)
    img = RasterImage.load_png(input_path)
    marked = embed(img, msg, _embed_config(cfg, strength, coeff_index))
    marked.save_png(output_path)
    click.echo(json.dumps({"bits": msg.to_hex(), "n_bits": len(msg),
                           "psnr_db": psnr(img, marked)}))


@wm.command(name="extract")
@click.option("-i", "--input", "input_path", required=True, metavar="PNG")
@click.option("--n-bits", type=int, required=True)
@click.option("--expect", "expect_hex", default=None, metavar="HEX",
              help="If given, also report bit accuracy against this payload.")
@click.option("--strength", type=float, default=None)
@click.option("--coeff-index", type=int, default=None)
@click.pass_obj
def wm_extract(cfg: PipelineConfig, input_path, n_bits, expect_hex, strength,
               coeff_index):
    """Blind-extract a payload."""
    img = RasterImage.load_png(input_path)
    msg = extract(img, n_bits, _embed_config(cfg, strength, coeff_index))
    record = {"bits": msg.to_hex(), "n_bits": len(msg)}
    if expect_hex is not None:
        sent = WatermarkMessage.from_hex(expect_hex, n_bits)
        record["bit_accuracy"] = bit_accuracy(sent, msg)
    click.echo(json.dumps(record))


@cli.command(name="latent-test")
@click.option("-i", "--input", "input_path", required=True, metavar="PATH")
@click.option("--input-format", type=click.Choice(("f32", "csv")),
              default="f32", show_default=True)
@click.option("--out", "out_path", default=None, metavar="PATH")
def latent_test(input_path, input_format, out_path):
    """Run the three normality tests on a latent sample."""
    sample = load_latents(input_path, input_format)
    results = [asdict(r) for r in run_all_tests(sample)]
    _emit(json.dumps(results), out_path)


@cli.group()
def label():
    """Derive ground-truth labels."""


@label.command(name="residual")
@click.option("--original", "original_path", required=True, metavar="PNG")
@click.option("--watermarked", "marked_path", required=True, metavar="PNG")
@click.option("--accuracies", "acc_path", required=True, metavar="JSON",
              help="JSON with per-channel bit accuracies: jpeg, gaussian, filter.")
@click.option("--id", "item_id", default="0", show_default=True)
@click.option("--out", "out_path", default=None, metavar="PATH")
@click.pass_obj
def label_residual(cfg: PipelineConfig, original_path, marked_path, acc_path,
                   item_id, out_path):
    """Quality score from PSNR plus thresholded robustness flags."""
    with open(acc_path, "r", encoding="utf-8") as fh:
        accs = json.load(fh)
    try:
        report = RobustnessReport(method=str(accs.get("method", "unknown")),
                                  jpeg_acc=float(accs["jpeg"]),
                                  gaussian_acc=float(accs["gaussian"]),
                                  filter_acc=float(accs["filter"]),
                                  n_images=int(accs.get("n_images", 1)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"bad accuracies file: {exc}") from None
    flags = residual_security_labels(report, cfg.thresholds)
    quality = residual_quality_label(RasterImage.load_png(original_path),
                                     RasterImage.load_png(marked_path),
                                     cfg.psnr_norm)
    rec = residual_label_record(item_id, ResidualLabel(quality, *flags))
    rec["category"] = CATEGORY_RESIDUAL
    _emit(json.dumps(rec), out_path)


@label.command(name="semantic")
@click.option("--pvalues", "pv_path", required=True, metavar="JSON",
              help="JSON with keys cvm, jb, k2.")
@click.option("--category", type=click.Choice(CATEGORIES[1:]),
              default=CATEGORY_LOSSLESS, show_default=True,
              help="Which semantic family the method belongs to.")
@click.option("--id", "item_id", default="0", show_default=True)
@click.option("--out", "out_path", default=None, metavar="PATH")
@click.pass_obj
def label_semantic(cfg: PipelineConfig, pv_path, category, item_id, out_path):
    """Quality and security levels from normality-test p-values."""
    with open(pv_path, "r", encoding="utf-8") as fh:
        pv = json.load(fh)
    try:
        lab = semantic_label(float(pv["cvm"]), float(pv["jb"]),
                             float(pv["k2"]), cfg.thresholds)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, WmevalError):
            raise
        raise ParameterError(f"bad p-values file: {exc}") from None
    rec = semantic_label_record(item_id, lab)
    rec["category"] = category
    _emit(json.dumps(rec), out_path)


def _parse_record(item_id, text) -> dict:
    result = parse(text)
    if isinstance(result, FormatVerdict):
        return {"id": item_id, "ok": False,
                "failure_reason": result.failure_reason.value,
                "detail": result.detail}
    rec = {"id": item_id, "ok": True, "category": result.category,
           "think_chars": len(result.think), "raw_length": result.raw_length}
    if result.category == CATEGORY_RESIDUAL:
        rec.update(residual_quality=result.residual_quality, jpeg=result.jpeg,
                   gaussian=result.gaussian, filter=result.filter)
    else:
        rec.update(semantic_quality=result.semantic_quality,
                   semantic_security=result.semantic_security)
    return rec


@cli.command(name="parse")
@click.option("--responses", "responses_path", required=True, metavar="JSONL",
              help="Rows of {id, response}.")
@click.option("--out", "out_path", default=None, metavar="PATH")
def parse_cmd(responses_path, out_path):
    """Strict-parse raw responses into structured rows."""
    rows = []
    for row in _read_jsonl(responses_path):
        if "id" not in row or "response" not in row:
            raise ParameterError("response rows need 'id' and 'response'")
        rows.append(_parse_record(row["id"], row["response"]))
    _emit_jsonl(rows, out_path)


@cli.command(name="reward")
@click.option("--responses", "responses_path", required=True, metavar="JSONL",
              help="Rows of {id, response}.")
@click.option("--gt", "gt_path", required=True, metavar="JSONL",
              help="Rows of ground-truth label records keyed by id.")
@click.option("--out", "out_path", default=None, metavar="PATH")
@click.pass_obj
def reward_cmd(cfg: PipelineConfig, responses_path, gt_path, out_path):
    """Score responses against ground truth labels."""
    gt_by_id = {}
    for row in _read_jsonl(gt_path):
        if "id" not in row:
            raise ParameterError("ground truth rows need an 'id'")
        gt_by_id[row["id"]] = ground_truth_from_record(row)
    rows = []
    for row in _read_jsonl(responses_path):
        if "id" not in row or "response" not in row:
            raise ParameterError("response rows need 'id' and 'response'")
        if row["id"] not in gt_by_id:
            raise ParameterError(f"no ground truth for id {row['id']!r}")
        bd = total_reward(row["response"], gt_by_id[row["id"]], cfg.reward)
        rows.append(breakdown_record(row["id"], bd))
    _emit_jsonl(rows, out_path)


@cli.command(name="grpo-sim")
@click.option("--task", "task_path", required=True, metavar="JSON",
              help="Trainer config: hyperparameters plus 'items' label records.")
@click.option("--curve-out", "curve_path", required=True, metavar="CSV")
@click.option("--policy-out", "policy_path", required=True, metavar="JSON")
@click.pass_obj
def grpo_sim(cfg: PipelineConfig, task_path, curve_path, policy_path):
    """Run the desk-scale GRPO simulator and save curve + final policy."""
    with open(task_path, "r", encoding="utf-8") as fh:
        try:
            task = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"task file {task_path}: {exc}") from None
    items = [ground_truth_from_record(rec) for rec in task.get("items", [])]
    if not items:
        raise ParameterError("task file needs a non-empty 'items' list")
    grpo_fields = {k: task[k] for k in ("group_size", "clip_epsilon",
                                        "kl_coeff", "learning_rate",
                                        "iterations", "seed") if k in task}
    grpo_cfg = GrpoConfig(**{**asdict(cfg.grpo), **grpo_fields})
    if task.get("warm_start", True):
        target = cfg.reward.target_length
        policy = mle_warm_start([ideal_factors(gt, target_length=target)
                                 for gt in items])
    else:
        policy = SyntheticPolicy.uniform()
    if "format_probability" in task:
        policy = with_format_probability(policy,
                                         float(task["format_probability"]))
    result = train(items, grpo_cfg, cfg.reward, initial_policy=policy)
    with open(curve_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("iteration", "mean_reward",
                                                "kl", "format_rate",
                                                "category_rate"))
        writer.writeheader()
        writer.writerows(result.curve)
    with open(policy_path, "w", encoding="utf-8") as fh:
        json.dump(result.policy.to_dict(), fh)
    click.echo(json.dumps({"iterations": len(result.curve),
                           "final_mean_reward": result.curve[-1]["mean_reward"]}))


@cli.command(name="report")
@click.option("--eval", "eval_path", default=None, metavar="JSONL",
              help="Rows of {id, method, gt, pred|null}.")
@click.option("--responses", "responses_path", default=None, metavar="JSONL")
@click.option("--gt", "gt_path", default=None, metavar="JSONL")
@click.option("--method", "method_name", default=None,
              help="Method name when building rows from --responses/--gt.")
@click.option("--format", "fmt", type=click.Choice(("csv", "text")),
              default="text", show_default=True)
@click.option("--out", "out_path", default=None, metavar="PATH")
def report_cmd(eval_path, responses_path, gt_path, method_name, fmt, out_path):
    """Aggregate per-method agreement metrics into a table."""
    if eval_path is not None:
        rows = _read_jsonl(eval_path)
    elif responses_path and gt_path and method_name:
        gt_rows = {row["id"]: row for row in _read_jsonl(gt_path)}
        rows = []
        for row in _read_jsonl(responses_path):
            if row["id"] not in gt_rows:
                raise ParameterError(f"no ground truth for id {row['id']!r}")
            parsed = _parse_record(row["id"], row["response"])
            rows.append({"id": row["id"], "method": method_name,
                         "gt": gt_rows[row["id"]],
                         "pred": parsed if parsed["ok"] else None})
    else:
        raise ParameterError("give --eval, or --responses with --gt and --method")
    reports = build_report(rows)
    _emit(report_csv(reports) if fmt == "csv" else report_table(reports),
          out_path)


def main(argv=None) -> int:
    """Dispatch; returns the process exit status instead of raising."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (WmevalError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # pragma: no cover - internal failure path
        click.echo(f"internal error: {exc!r}", err=True)
        return 2


def entry() -> None:
    sys.exit(main())

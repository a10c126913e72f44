"""Command-line pipeline: synth | build | train | compare | explain |
correlate | report, all driven by one JSON configuration file.

Every artifact embeds (config hash, seed, tool version) and no artifact
contains wall-clock state, so rerunning a command with unchanged inputs
reproduces its outputs byte for byte. A lock file guards each output
directory against concurrent writers.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, evaluation, explain as explainmod, graph as graphmod
from . import models as modelsmod
from . import nn, stats, synth as synthmod, taxonomy
from .evaluation import ExperimentReport
from .graph import TimeWindows
from .models import Hyperparams
from .synth import CANCER_TYPES, SynthConfig


class PipelineError(Exception):
    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


class ConfigFileError(PipelineError):
    def __init__(self, message: str):
        super().__init__(message, exit_code=2)


class MissingArtifactError(PipelineError):
    def __init__(self, message: str):
        super().__init__(message, exit_code=3)


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class EvalConfig:
    seed: int
    k: int = 5
    mode: str = "cv"  # "cv" | "holdout"
    holdout_fraction: float = 0.2


@dataclass(frozen=True)
class ExplainConfig:
    seed: int
    n_permutations: int = 5000
    n_instances: int = 25
    cancer_type: str | None = None  # None = pooled


@dataclass(frozen=True)
class PipelineConfig:
    output_dir: Path
    synth: SynthConfig
    windows: TimeWindows
    model: Hyperparams
    model_seed: int
    eval: EvalConfig
    explain: ExplainConfig
    config_hash: str
    jobs: int = 1


def _require_keys(block: dict, allowed: set[str], required: set[str], name: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigFileError(f"unknown keys in {name!r} block: {sorted(unknown)}")
    missing = required - set(block)
    if missing:
        raise ConfigFileError(f"missing keys in {name!r} block: {sorted(missing)}")


def load_config(path: str | Path, seed_override: int | None = None,
                out_override: str | None = None, jobs: int = 1) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigFileError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigFileError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigFileError("config root must be an object")

    top_allowed = {"output_dir", "synth", "windows", "model", "eval", "explain"}
    _require_keys(raw, top_allowed, {"output_dir", "synth", "model", "eval", "explain"}, "top-level")

    synth_block = dict(raw["synth"])
    synth_allowed = {f.name for f in fields(SynthConfig)}
    _require_keys(synth_block, synth_allowed, {"seed"}, "synth")

    windows_block = dict(raw.get("windows", {}))
    _require_keys(
        windows_block,
        {"observation_start", "observation_end", "horizon_end"},
        set(),
        "windows",
    )

    model_block = dict(raw["model"])
    model_allowed = {f.name for f in fields(Hyperparams)} | {"seed"}
    _require_keys(model_block, model_allowed, {"seed"}, "model")
    model_seed = model_block.pop("seed")

    eval_block = dict(raw["eval"])
    _require_keys(eval_block, {f.name for f in fields(EvalConfig)}, {"seed"}, "eval")

    explain_block = dict(raw["explain"])
    _require_keys(explain_block, {f.name for f in fields(ExplainConfig)}, {"seed"}, "explain")

    if seed_override is not None:
        synth_block["seed"] = seed_override
        model_seed = seed_override
        eval_block["seed"] = seed_override
        explain_block["seed"] = seed_override

    try:
        synth_cfg = synthmod.config_from_dict(synth_block)
        synth_cfg.validate()
    except synthmod.ConfigError as e:
        raise ConfigFileError(f"synth block: {e}") from e
    try:
        windows = TimeWindows(**windows_block)
    except (TypeError, ValueError) as e:
        raise ConfigFileError(f"windows block: {e}") from e
    hp = Hyperparams(**model_block)
    eval_cfg = EvalConfig(**eval_block)
    if eval_cfg.mode not in ("cv", "holdout"):
        raise ConfigFileError(f"eval.mode must be 'cv' or 'holdout', got {eval_cfg.mode!r}")
    explain_cfg = ExplainConfig(**explain_block)
    if explain_cfg.cancer_type is not None and explain_cfg.cancer_type not in CANCER_TYPES:
        raise ConfigFileError(
            f"explain.cancer_type {explain_cfg.cancer_type!r} unknown"
        )

    output_dir = Path(out_override) if out_override else Path(raw["output_dir"])

    resolved = {
        "output_dir": str(output_dir),
        "synth": synthmod._config_dict(synth_cfg),
        "windows": {
            "observation_start": windows.observation_start,
            "observation_end": windows.observation_end,
            "horizon_end": windows.horizon_end,
        },
        "model": {**hp.to_dict(), "seed": model_seed},
        "eval": {
            "seed": eval_cfg.seed,
            "k": eval_cfg.k,
            "mode": eval_cfg.mode,
            "holdout_fraction": eval_cfg.holdout_fraction,
        },
        "explain": {
            "seed": explain_cfg.seed,
            "n_permutations": explain_cfg.n_permutations,
            "n_instances": explain_cfg.n_instances,
            "cancer_type": explain_cfg.cancer_type,
        },
    }
    config_hash = hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]

    return PipelineConfig(
        output_dir=output_dir,
        synth=synth_cfg,
        windows=windows,
        model=hp,
        model_seed=model_seed,
        eval=eval_cfg,
        explain=explain_cfg,
        config_hash=config_hash,
        jobs=jobs,
    )


# ---------------------------------------------------------------------------
# Output-directory lock and provenance helpers

LOCK_NAME = ".carenet.lock"


class OutputLock:
    def __init__(self, out_dir: Path):
        self.path = out_dir / LOCK_NAME
        self.fd: int | None = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise PipelineError(
                f"output directory is locked by {self.path}; another command is "
                f"writing there (remove the file if it is stale)"
            ) from None
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            self.path.unlink(missing_ok=True)
        return False


def _provenance(config: PipelineConfig, seed: int) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": config.config_hash,
        "seed": seed,
    }


def _tsv_header(config: PipelineConfig, seed: int) -> str:
    return (
        f"# carenet {__version__}\n"
        f"# config_hash={config.config_hash}\n"
        f"# seed={seed}\n"
    )


def _write_jsonl(path: Path, header: dict, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for rec in records:
            f.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# Artifact paths


def dataset_dir(config: PipelineConfig) -> Path:
    return config.output_dir / "dataset"


def graphs_dir(config: PipelineConfig) -> Path:
    return config.output_dir / "graphs"


def checkpoints_dir(config: PipelineConfig) -> Path:
    return config.output_dir / "checkpoints"


def reports_dir(config: PipelineConfig) -> Path:
    return config.output_dir / "reports"


def _need(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{path} not found; run `carenet {producer}` first")
    return path


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(config: PipelineConfig) -> None:
    cohort = synthmod.generate_cohort(config.synth)
    out = dataset_dir(config)
    synthmod.write_dataset(cohort, out, config=config.synth)
    with open(out / "provenance.json", "w", encoding="utf-8") as f:
        json.dump(_provenance(config, config.synth.seed), f, indent=1, sort_keys=True)
        f.write("\n")
    print(
        f"wrote dataset to {out}: {len(cohort.patients)} patients, "
        f"{len(cohort.events)} events"
    )


def _load_dataset(config: PipelineConfig) -> synthmod.Cohort:
    path = _need(dataset_dir(config) / "manifest.json", "synth").parent
    return synthmod.read_dataset(path)


def cmd_build(config: PipelineConfig) -> None:
    cohort = _load_dataset(config)
    graphs = graphmod.build_patient_graphs(
        cohort.events, cohort.hcps, cohort.notes, config.windows
    )
    out = graphs_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    graphmod.dump_graphs(graphs.values(), out / "collab.jsonl")
    for kind, simplify in (("all_hcp", graphmod.simplify_to_hcp),
                           ("all_note", graphmod.simplify_to_notes)):
        records = []
        for pid in sorted(graphs):
            sg = simplify(graphs[pid])
            records.append(
                {
                    "patient_id": sg.patient_id,
                    "kind": sg.kind,
                    "nodes": list(sg.nodes),
                    "edges": [list(e) for e in sg.edges],
                }
            )
        _write_jsonl(
            out / f"{kind}.jsonl",
            {"schema_version": graphmod.GRAPH_DUMP_VERSION, "kind": kind},
            records,
        )
    print(f"wrote {len(graphs)} collaboration graphs (+ simplified variants) to {out}")


def _load_graphs(config: PipelineConfig) -> dict[str, graphmod.CollabGraph]:
    path = _need(graphs_dir(config) / "collab.jsonl", "build")
    return {g.patient_id: g for g in graphmod.load_graphs(path)}


def _load_simplified(config: PipelineConfig, kind: str) -> dict[str, graphmod.SimplifiedGraph]:
    name = {"all-hcp": "all_hcp", "all-note": "all_note"}[kind]
    path = _need(graphs_dir(config) / f"{name}.jsonl", "build")
    out = {}
    with open(path, encoding="utf-8") as f:
        f.readline()
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "patient_id" not in obj:
                continue
            out[obj["patient_id"]] = graphmod.SimplifiedGraph(
                patient_id=obj["patient_id"],
                kind=obj["kind"],
                nodes=tuple(obj["nodes"]),
                edges=tuple((s, d) for s, d in obj["edges"]),
            )
    return out


def _training_instances(config: PipelineConfig, kind: str, cancer_type: str):
    cohort = _load_dataset(config)
    patients = [
        p for p in cohort.patients if cancer_type in ("all", p.cancer_type)
    ]
    if kind == "topo_only":
        simplified = _load_simplified(config, "all-hcp")
        patients = [p for p in patients if p.patient_id in simplified]
        instances = [simplified[p.patient_id] for p in patients]
    else:
        graphs = _load_graphs(config)
        evaluation.assert_no_leakage(graphs, config.windows)
        patients = [p for p in patients if p.patient_id in graphs]
        instances = evaluation._instances_for(
            kind if kind in evaluation.COMPARISON_MODELS else "collab_only", patients, graphs
        )
        if kind == "attr_only":
            instances = [graphs[p.patient_id] for p in patients]
    labels = np.array([p.survived for p in patients], dtype=np.int64)
    return instances, labels


def checkpoint_path(config: PipelineConfig, kind: str, cancer_type: str) -> Path:
    return checkpoints_dir(config) / f"{kind}_{cancer_type}.json"


def cmd_train(config: PipelineConfig, model_kind: str, cancer_type: str) -> None:
    if model_kind not in modelsmod.MODEL_KINDS:
        raise PipelineError(
            f"unknown model kind {model_kind!r}; choose from {modelsmod.MODEL_KINDS}",
            exit_code=2,
        )
    if cancer_type not in CANCER_TYPES + ("all",):
        raise PipelineError(
            f"unknown cancer type {cancer_type!r}; choose from {CANCER_TYPES + ('all',)}",
            exit_code=2,
        )
    instances, labels = _training_instances(config, model_kind, cancer_type)
    model = modelsmod.make_model(model_kind, hidden_dim=config.model.hidden_dim)
    result = modelsmod.train(model, instances, labels, config.model, seed=config.model_seed)
    out = checkpoint_path(config, model_kind, cancer_type)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        **_provenance(config, config.model_seed),
        "model_kind": model_kind,
        "cancer_type": cancer_type,
        "hyperparams": config.model.to_dict(),
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "n_train": int(labels.size),
    }
    nn.save_params(out, result.params, meta)
    print(
        f"trained {model_kind} on {cancer_type} ({labels.size} patients, "
        f"best epoch {result.best_epoch}); checkpoint at {out}"
    )


def cmd_compare(config: PipelineConfig) -> None:
    cohort = _load_dataset(config)
    graphs = _load_graphs(config)
    report = evaluation.run_comparison(
        cohort.patients,
        graphs,
        config.windows,
        config.model,
        k=config.eval.k,
        seed=config.eval.seed,
        config_hash=config.config_hash,
        mode=config.eval.mode,
        holdout_fraction=config.eval.holdout_fraction,
        jobs=config.jobs,
    )
    out = reports_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    write_comparison_report(config, report, out)
    print(f"wrote comparison report to {out}")


def write_comparison_report(config: PipelineConfig, report: ExperimentReport, out: Path) -> None:
    # TSV mirroring the per-cancer-type three-model table
    lines = [_tsv_header(config, report.seed).rstrip("\n")]
    cols = [
        "cancer_type",
        "model",
        "n_survived",
        "n_deceased",
        "correct_survived",
        "correct_deceased",
        "accuracy",
    ]
    lines.append("\t".join(cols))
    for cell in report.cells:
        if cell.error is not None:
            lines.append(f"{cell.cancer_type}\t{cell.model_kind}\tfailed: {cell.error}")
            continue
        m = cell.mean
        lines.append(
            "\t".join(
                [
                    cell.cancer_type,
                    cell.model_kind,
                    f"{m['n_survived']:.1f}",
                    f"{m['n_deceased']:.1f}",
                    f"{m['correct_survived']:.1f}",
                    f"{m['correct_deceased']:.1f}",
                    f"{m['accuracy']:.4f}",
                ]
            )
        )
    (out / "comparison.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    detail = []
    for cell in report.cells:
        detail.append(
            {
                "cancer_type": cell.cancer_type,
                "model": cell.model_kind,
                "error": cell.error,
                "mean": cell.mean,
                "folds": [m.to_dict() for m in cell.fold_metrics],
            }
        )
    _write_jsonl(
        out / "comparison_detail.jsonl",
        {**_provenance(config, report.seed), "k": report.k, "mode": config.eval.mode},
        detail,
    )
    _write_svg_chart(report, out / "comparison_accuracy.svg")


def _write_svg_chart(report: ExperimentReport, path: Path) -> None:
    """Grouped bar chart of mean accuracies (deterministic, no timestamps)."""
    groups = []
    for ct in CANCER_TYPES:
        bars = []
        for kind in evaluation.COMPARISON_MODELS:
            try:
                cell = report.cell(ct, kind)
            except KeyError:
                continue
            if cell.mean is not None:
                bars.append((kind, cell.mean["accuracy"]))
        if bars:
            groups.append((ct, bars))
    width, height, margin = 640, 320, 48
    plot_h = height - 2 * margin
    colors = {"collab_only": "#4878a8", "comorbidity_only": "#c08030", "combined": "#509850"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = height - margin - frac * plot_h
        parts.append(
            f'<text x="{margin - 8}" y="{y + 4}" font-size="11" text-anchor="end">{frac:.2f}</text>'
        )
        parts.append(
            f'<line x1="{margin}" y1="{y}" x2="{width - margin}" y2="{y}" '
            f'stroke="#dddddd"/>'
        )
    if groups:
        group_w = (width - 2 * margin) / len(groups)
        for gi, (ct, bars) in enumerate(groups):
            bar_w = group_w / (len(bars) + 1)
            for bi, (kind, acc) in enumerate(bars):
                x = margin + gi * group_w + (bi + 0.5) * bar_w
                h = acc * plot_h
                y = height - margin - h
                parts.append(
                    f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" '
                    f'fill="{colors.get(kind, "#888888")}"><title>{ct} {kind}: '
                    f"{acc:.4f}</title></rect>"
                )
            parts.append(
                f'<text x="{margin + (gi + 0.5) * group_w:.1f}" y="{height - margin + 16}" '
                f'font-size="12" text-anchor="middle">{ct}</text>'
            )
    legend_y = 16
    for kind, color in colors.items():
        parts.append(f'<rect x="{margin}" y="{legend_y - 9}" width="10" height="10" fill="{color}"/>')
        parts.append(
            f'<text x="{margin + 14}" y="{legend_y}" font-size="11">{kind}</text>'
        )
        legend_y += 14
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


def cmd_explain(config: PipelineConfig, checkpoint: Path | None = None) -> None:
    if checkpoint is None:
        checkpoint = checkpoint_path(config, "attr_only", "all")
    if not Path(checkpoint).exists():
        raise MissingArtifactError(
            f"checkpoint {checkpoint} not found; run `carenet train --model attr_only "
            f"--cancer-type all` first"
        )
    params, meta = nn.load_params(checkpoint)
    if meta.get("model_kind") != "attr_only":
        raise PipelineError(
            f"explain requires an attr_only checkpoint, got {meta.get('model_kind')!r}",
            exit_code=2,
        )
    cohort = _load_dataset(config)
    graphs = _load_graphs(config)
    ct = config.explain.cancer_type
    patients = [
        p
        for p in cohort.patients
        if p.patient_id in graphs and (ct is None or p.cancer_type == ct)
    ]
    if not patients:
        raise PipelineError("no patients with graphs to explain", exit_code=2)

    rng = np.random.default_rng(config.explain.seed)
    n = min(config.explain.n_instances, len(patients))
    chosen = sorted(rng.choice(len(patients), size=n, replace=False).tolist())

    W, b = params["head.W"], params["head.b"]

    def model_fn(X: np.ndarray) -> np.ndarray:
        return nn.sigmoid(X @ W.T + b)[:, 0]

    baseline = np.zeros(taxonomy.FEATURE_DIM)
    results = []
    per_instance = []
    for pos, i in enumerate(chosen):
        p = patients[i]
        x = modelsmod.pooled_attributes(graphs[p.patient_id])
        res = explainmod.shapley_sampled(
            model_fn,
            x,
            baseline,
            n_permutations=config.explain.n_permutations,
            seed=config.explain.seed * 100003 + pos,
        )
        results.append(res)
        per_instance.append(
            {
                "patient_id": p.patient_id,
                "cancer_type": p.cancer_type,
                "model_output": res.model_output,
                "baseline_output": res.baseline_output,
                "values": [float(v) for v in res.values],
                "standard_errors": [float(s) for s in res.standard_errors],
            }
        )
    ranking = explainmod.rank_attributes(results, names=taxonomy.feature_names())

    out = reports_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    lines = [_tsv_header(config, config.explain.seed).rstrip("\n")]
    lines.append("rank\tattribute\tmean_abs_shap\tmin\tmax")
    for row in ranking.rows():
        lines.append(
            f"{row['rank']}\t{row['name']}\t{row['mean_abs_shap']:.6f}"
            f"\t{row['min']:.6f}\t{row['max']:.6f}"
        )
    (out / "attributes.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_jsonl(
        out / "attribute_details.jsonl",
        {
            **_provenance(config, config.explain.seed),
            "checkpoint": str(checkpoint),
            "n_permutations": config.explain.n_permutations,
            "baseline": "zeros",
        },
        per_instance,
    )
    gp_rank = ranking.rank_of(taxonomy.GP_FEATURE)
    print(
        f"wrote attribute ranking to {out}; "
        f"'specialty=General Practice' ranks #{gp_rank} of {taxonomy.FEATURE_DIM}"
    )


def cmd_correlate(config: PipelineConfig) -> None:
    cohort = _load_dataset(config)
    entries = stats.confounder_report(cohort.patients, per_cancer_type=True)
    out = reports_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    lines = [_tsv_header(config, config.synth.seed).rstrip("\n")]
    lines.append("cancer_type\tvariable\tn\tpearson_r\tpearson_p\tspearman_rho\tspearman_p\tnote")
    for e in entries:
        fmt = lambda v: "undefined" if v is None else f"{v:.6f}"
        lines.append(
            "\t".join(
                [
                    e.cancer_type,
                    e.variable,
                    str(e.n),
                    fmt(e.pearson_r),
                    fmt(e.pearson_p),
                    fmt(e.spearman_rho),
                    fmt(e.spearman_p),
                    e.note,
                ]
            )
        )
    (out / "confounders.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_jsonl(
        out / "confounders.jsonl",
        _provenance(config, config.synth.seed),
        [e.to_dict() for e in entries],
    )
    print(f"wrote confounder correlations to {out}")


def cmd_report(config: PipelineConfig) -> None:
    out = reports_dir(config)
    comparison = _need(out / "comparison_detail.jsonl", "compare")
    confounders = _need(out / "confounders.jsonl", "correlate")
    attributes = out / "attributes.tsv"  # optional

    with open(comparison, encoding="utf-8") as f:
        comp_header = json.loads(f.readline())
        comp_rows = [json.loads(line) for line in f if line.strip()]
    with open(confounders, encoding="utf-8") as f:
        json.loads(f.readline())
        corr_rows = [json.loads(line) for line in f if line.strip()]

    md = [
        "# Pipeline summary",
        "",
        f"- tool: carenet {__version__}",
        f"- config_hash: {config.config_hash}",
        f"- evaluation: {comp_header.get('k')}-fold ({comp_header.get('mode')}), "
        f"seed {comp_header.get('seed')}",
        "",
        "## Survival prediction (per cancer type, fold-mean)",
        "",
        "| cancer type | model | accuracy | correct survived | correct deceased |",
        "|---|---|---|---|---|",
    ]
    for row in comp_rows:
        if row.get("error"):
            md.append(f"| {row['cancer_type']} | {row['model']} | failed | - | - |")
            continue
        m = row["mean"]
        md.append(
            f"| {row['cancer_type']} | {row['model']} | {m['accuracy']:.4f} | "
            f"{m['correct_survived']:.1f}/{m['n_survived']:.1f} | "
            f"{m['correct_deceased']:.1f}/{m['n_deceased']:.1f} |"
        )
    md += [
        "",
        "![accuracies](comparison_accuracy.svg)",
        "",
        "## Confounder correlations with survival",
        "",
        "| cancer type | variable | pearson r | p | spearman rho | p |",
        "|---|---|---|---|---|---|",
    ]
    for row in corr_rows:
        fmt = lambda v: "undefined" if v is None else f"{v:.4f}"
        md.append(
            f"| {row['cancer_type']} | {row['variable']} | {fmt(row['pearson_r'])} | "
            f"{fmt(row['pearson_p'])} | {fmt(row['spearman_rho'])} | {fmt(row['spearman_p'])} |"
        )
    if attributes.exists():
        md += ["", "## Most influential attributes (mean |SHAP|)", ""]
        lines = attributes.read_text(encoding="utf-8").splitlines()
        body = [l for l in lines if l and not l.startswith("#")]
        md.append("| rank | attribute | mean abs SHAP |")
        md.append("|---|---|---|")
        for line in body[1:11]:
            rank, name, mabs, *_ = line.split("\t")
            md.append(f"| {rank} | {name} | {float(mabs):.4f} |")
    md.append("")
    (out / "summary.md").write_text("\n".join(md), encoding="utf-8")
    print(f"wrote consolidated summary to {out / 'summary.md'}")


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carenet",
        description="Collaboration-network survival pipeline on synthetic EHR cohorts",
    )
    parser.add_argument("--config", required=True, help="path to the JSON pipeline config")
    parser.add_argument("--out", help="override the config's output directory")
    parser.add_argument("--seed", type=int, help="override every seed in the config")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers for compare")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", help="generate the synthetic dataset")
    sub.add_parser("build", help="build per-patient collaboration graphs")
    p_train = sub.add_parser("train", help="train one model variant")
    p_train.add_argument("--model", required=True, choices=modelsmod.MODEL_KINDS)
    p_train.add_argument(
        "--cancer-type", required=True, choices=CANCER_TYPES + ("all",)
    )
    p_explain = sub.add_parser("explain", help="rank attributes by Shapley value")
    p_explain.add_argument("--checkpoint", help="attr_only checkpoint (default: trained 'all')")
    sub.add_parser("compare", help="cross-validated three-model comparison")
    sub.add_parser("correlate", help="confounder correlation table")
    sub.add_parser("report", help="consolidated human-readable summary")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(
            args.config, seed_override=args.seed, out_override=args.out, jobs=args.jobs
        )
        with OutputLock(config.output_dir):
            if args.command == "synth":
                cmd_synth(config)
            elif args.command == "build":
                cmd_build(config)
            elif args.command == "train":
                cmd_train(config, args.model, args.cancer_type)
            elif args.command == "compare":
                cmd_compare(config)
            elif args.command == "explain":
                cmd_explain(
                    config, Path(args.checkpoint) if args.checkpoint else None
                )
            elif args.command == "correlate":
                cmd_correlate(config)
            elif args.command == "report":
                cmd_report(config)
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (synthmod.ConfigError, synthmod.DatasetFormatError, evaluation.LeakageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: reproducible ingest/compile/train/infer/evaluate
workflows. All randomness flows from --seed; without --backend-url only mock
backends are selectable."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import corpus, experiments, pipelines
from .backend import Backend, GenerationConfig, HttpBackend, Ledger, MockBackend
from .metrics import EvalPair, evaluate
from .pipelines import StructureKind, structure
from .taskformat import StageKind

log = logging.getLogger("explainkit")


class CliError(click.ClickException):
    def show(self, file=None):
        record = {"error": type(self).__name__, "message": self.message}
        click.echo(json.dumps(record), err=True)


def _read_config_file(path: str) -> dict:
    values = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


@click.group()
@click.option("--data-dir", envvar="EXPLAINKIT_DATA_DIR", default=".", show_default=True)
@click.option("--results-dir", envvar="EXPLAINKIT_RESULTS_DIR", default="results", show_default=True)
@click.option("--backend-url", envvar="EXPLAINKIT_BACKEND_URL", default=None)
@click.option("--seed", default=13, show_default=True, type=int)
@click.option("--jobs", default=1, show_default=True, type=int, help="Generation batch size for HTTP backends.")
@click.option("--log-level", default="INFO", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="Key-value config file; flags override it.")
@click.pass_context
def main(ctx, data_dir, results_dir, backend_url, seed, jobs, log_level, config_path):
    """Free-text explanation pipelines: compile, train, infer, evaluate."""
    settings = {
        "data_dir": data_dir,
        "results_dir": results_dir,
        "backend_url": backend_url,
        "seed": seed,
        "jobs": jobs,
    }
    if config_path:
        file_values = _read_config_file(config_path)
        for key in ("data_dir", "results_dir", "backend_url"):
            source = ctx.get_parameter_source(key)
            if key in file_values and source is not None and source.name == "DEFAULT":
                settings[key] = file_values[key]
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.INFO))
    ctx.obj = settings


def _load_dataset(path: str, split: str = "dev") -> corpus.Dataset:
    return corpus.ingest(path, "canonical_jsonl", split)


def _make_backend(spec: str, settings: dict) -> Backend:
    """Backend selector: 'echo', 'oracle:<canonical.jsonl>[,<more.jsonl>]',
    'table:<map.json>', or 'http'."""
    if spec == "echo":
        return MockBackend.echo()
    if spec.startswith("table:"):
        table = json.loads(Path(spec[len("table:"):]).read_text(encoding="utf-8"))
        return MockBackend.from_table(table)
    if spec.startswith("oracle:"):
        datasets = [
            _load_dataset(p) for p in spec[len("oracle:"):].split(",") if p
        ]
        if not datasets:
            raise CliError("oracle backend needs at least one dataset path")
        return MockBackend.oracle(*datasets)
    if spec == "http":
        if not settings.get("backend_url"):
            raise CliError("http backend requires --backend-url (or EXPLAINKIT_BACKEND_URL)")
        return HttpBackend(settings["backend_url"], batch_size=max(1, settings.get("jobs", 1) * 16))
    raise CliError(f"unknown backend {spec!r}; use echo, table:<file>, oracle:<file>, or http")


def _fail(exc: Exception) -> None:
    raise CliError(str(exc)) from exc


@main.command()
@click.option("--format", "fmt", type=click.Choice(["esnli_csv", "cose_csv", "canonical_jsonl"]), required=True)
@click.option("--split", type=click.Choice(["train", "dev", "test"]), required=True)
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--mapping", "mapping_path", type=click.Path(exists=True), default=None, help="CosE column mapping JSON.")
@click.pass_obj
def ingest(settings, fmt, split, in_path, out_path, mapping_path):
    """Convert a source file to the canonical dataset format."""
    try:
        mapping = corpus.CoseMapping.from_file(mapping_path) if mapping_path else None
        ds, errors = corpus.ingest_with_report(in_path, fmt, split, mapping=mapping)
        corpus.export_jsonl(ds, out_path)
    except corpus.CorpusError as exc:
        _fail(exc)
    click.echo(f"wrote {len(ds)} instances to {out_path} ({len(errors)} rows rejected)")
    for err in errors[:20]:
        click.echo(f"  row {err.row}: {err.reason}", err=True)


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.pass_obj
def stats(settings, dataset_path):
    """Token statistics for a canonical dataset."""
    try:
        ds = _load_dataset(dataset_path)
    except corpus.CorpusError as exc:
        _fail(exc)
    s = corpus.compute_stats(ds)
    click.echo(f"{'count':<22}{s.count}")
    click.echo(f"{'input tokens':<22}{s.mean_input_tokens:.2f} ± {s.sd_input_tokens:.2f}")
    click.echo(f"{'explanation tokens':<22}{s.mean_expl_tokens:.2f} ± {s.sd_expl_tokens:.2f}")


@main.command(name="compile")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--structure", "kind", type=click.Choice([k.value for k in StructureKind]), required=True)
@click.option("--budget", type=float, required=True)
@click.option("--seed", type=int, default=None, help="Defaults to the global --seed.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--backend", "backend_spec", default=None, help="Required for etp_sl (semi-labeling).")
@click.pass_obj
def compile_cmd(settings, dataset_path, kind, budget, seed, out_dir, backend_spec):
    """Compile per-stage training pairs for a structure and budget."""
    try:
        ds = corpus.ingest(dataset_path, "canonical_jsonl", "train")
        view = corpus.sample_budget(ds, budget, seed if seed is not None else settings["seed"])
        backend = _make_backend(backend_spec, settings) if backend_spec else None
        pairs = pipelines.compile_training_pairs(view, structure(kind), backend=backend)
        paths = experiments.write_pairs(pairs, Path(out_dir))
    except (corpus.CorpusError, pipelines.PipelineError) as exc:
        _fail(exc)
    for stage, path in paths.items():
        count = sum(1 for p in pairs if p.stage.value == stage)
        click.echo(f"{stage}: {count} pairs -> {path}")


@main.command()
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--stage", "stage_name", default=None, help="Train only this stage's pairs.")
@click.option("--backend", "backend_spec", default="http")
@click.option("--hyper", multiple=True, help="key=value overrides, e.g. --hyper epochs=1")
@click.pass_obj
def train(settings, pairs_path, stage_name, backend_spec, hyper):
    """Submit a training job over a compiled pair file."""
    try:
        backend = _make_backend(backend_spec, settings)
        pairs = []
        with open(pairs_path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    record = json.loads(line)
                    if stage_name and record.get("stage") != stage_name:
                        continue
                    pairs.append((record["input"], record["target"]))
        overrides = {}
        for item in hyper:
            key, _, value = item.partition("=")
            try:
                overrides[key] = json.loads(value)
            except json.JSONDecodeError:
                overrides[key] = value
        job = backend.train(pairs, overrides)
    except Exception as exc:
        _fail(exc)
    click.echo(json.dumps({"job_id": job.job_id, "model": job.model}))


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--structure", "kind", type=click.Choice([k.value for k in StructureKind]), required=True)
@click.option("--backend", "backend_spec", required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--max-new-tokens", default=100, show_default=True, type=int)
@click.pass_obj
def infer(settings, dataset_path, kind, backend_spec, out_path, max_new_tokens):
    """Run a structure's inference flow and write a generations file."""
    try:
        ds = _load_dataset(dataset_path)
        backend = _make_backend(backend_spec, settings)
        results = pipelines.run_inference(
            ds, structure(kind), backend, GenerationConfig(max_new_tokens=max_new_tokens)
        )
        experiments.write_generations(results, Path(out_path))
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {len(results)} generations to {out_path}")


@main.command(name="evaluate")
@click.option("--generations", "generations_path", type=click.Path(exists=True), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--refs", type=click.Choice(["first2", "all"]), default="first2", show_default=True)
@click.pass_obj
def evaluate_cmd(settings, generations_path, dataset_path, refs):
    """Score a generations file against gold labels and explanations."""
    try:
        ds = _load_dataset(dataset_path)
        by_id = {inst.id: inst for inst in ds.instances}
        eval_pairs = []
        n_failures = 0
        with open(generations_path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                record = json.loads(line)
                inst = by_id[record["id"]]
                refs_tuple = inst.gold_explanations[:2] if refs == "first2" else inst.gold_explanations
                if not record.get("clean_parse", True):
                    n_failures += 1
                eval_pairs.append(
                    EvalPair(
                        id=inst.id,
                        candidate=record.get("generated_explanation", ""),
                        references=tuple(refs_tuple),
                        gold_label=inst.gold_label,
                        predicted_label=record.get("predicted_label", ""),
                    )
                )
        report = evaluate(eval_pairs, n_parse_failures=n_failures)
    except Exception as exc:
        _fail(exc)
    click.echo(json.dumps(report.to_record(), sort_keys=True))


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--id", "instance_id", required=True)
@click.option("--label", required=True, help="Ground-truth label to condition on.")
@click.option("--backend", "backend_spec", required=True)
@click.pass_obj
def explain(settings, dataset_path, instance_id, label, backend_spec):
    """Label-conditioned explanations: the given label and the predicted one."""
    try:
        ds = _load_dataset(dataset_path)
        inst = ds.by_id(instance_id)
        backend = _make_backend(backend_spec, settings)
        config = GenerationConfig()
        true_expl = pipelines.generate_conditioned(inst, label, backend, config)
        results = pipelines.run_inference(
            corpus.Dataset(name=ds.name, split=ds.split, instances=(inst,)),
            structure(StructureKind.PTE),
            backend,
            config,
        )
        predicted = results[0]
    except Exception as exc:
        _fail(exc)
    click.echo(f"True label:      {label}")
    click.echo(f"Explanation:     {true_expl}")
    click.echo(f"Predicted label: {predicted.predicted_label}")
    click.echo(f"Explanation:     {predicted.generated_explanation}")


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--sources", multiple=True, required=True, help="name=path.json (map of id->explanation); must include gold=...")
@click.option("--backend", "backend_spec", required=True)
@click.pass_obj
def informedness(settings, dataset_path, sources, backend_spec):
    """Explanation-only label prediction with recover ratios per source."""
    try:
        ds = _load_dataset(dataset_path)
        backend = _make_backend(backend_spec, settings)
        source_maps = {}
        for item in sources:
            name, _, path = item.partition("=")
            if not path:
                raise CliError(f"--sources expects name=path, got {item!r}")
            source_maps[name] = json.loads(Path(path).read_text(encoding="utf-8"))
        rows = experiments.label_informedness(ds, source_maps, backend)
    except click.ClickException:
        raise
    except Exception as exc:
        _fail(exc)
    click.echo(experiments.render_informedness_table(rows), nl=False)


@main.command()
@click.option("--plan", "plan_path", type=click.Path(exists=True), required=True)
@click.option("--train", "train_path", type=click.Path(exists=True), required=True)
@click.option("--dev", "dev_path", type=click.Path(exists=True), required=True)
@click.option("--test", "test_path", type=click.Path(exists=True), default=None)
@click.option("--backend", "backend_spec", required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Defaults to <results_dir>/<dataset>.")
@click.pass_obj
def grid(settings, plan_path, train_path, dev_path, test_path, backend_spec, out_dir):
    """Run a full structure x budget experiment grid."""
    try:
        plan = experiments.ExperimentPlan.from_json(plan_path)
        datasets = {
            "train": corpus.ingest(train_path, "canonical_jsonl", "train"),
            "dev": corpus.ingest(dev_path, "canonical_jsonl", "dev"),
        }
        if test_path:
            datasets["test"] = corpus.ingest(test_path, "canonical_jsonl", "test")
        backend = _make_backend(backend_spec, settings)
        out = Path(out_dir) if out_dir else Path(settings["results_dir"]) / plan.dataset
        records = experiments.run_grid(plan, datasets, backend, out)
    except Exception as exc:
        _fail(exc)
    failed = [r for r in records if r.failed]
    click.echo(f"{len(records)} cells ({len(failed)} failed) -> {out}")
    click.echo(experiments.render_summary_table(records), nl=False)
    if failed:
        sys.exit(3)



if __name__ == "__main__":
    main()

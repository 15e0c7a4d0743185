"""
Batch command line: dataset generation, training, the paper-level
experiments, retrieval/filtering utilities, and the live service.

Every subcommand takes a YAML config (defaults ship with the package) and
a --seed; experiment outputs are JSON reports plus optional matplotlib
plots. Exit codes: 0 success, 1 config error, 2 numeric failure.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np
import yaml

from . import control as C
from . import demos as D
from . import experiments as X
from . import language as lang
from . import models as M
from . import sim
from .assets import data_path
from .errors import ConfigError, NumericError


def load_config(path: str | None) -> dict:
    src = data_path("default_config.yaml") if path is None else path
    try:
        with open(src) as f:
            cfg = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {src}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config file is not valid YAML: {e}") from e
    if not isinstance(cfg, dict) or cfg.get("schema") != "langsteer-config/1":
        raise ConfigError("config must declare schema: langsteer-config/1")
    return cfg


def _language_for(cfg: dict) -> X.SimLanguage:
    env_name = cfg["env"]["name"]
    utt = cfg.get("language", {}).get("utterances", "builtin")
    if utt == "builtin":
        return X.load_sim_language(env_name)
    labeled = lang.load_exemplar_file(utt)
    table = lang.EmbeddingTable.from_hash(
        [t for _, t in labeled], dim=cfg.get("language", {}).get("hash_dim", 64))
    exemplars = lang.build_exemplars(labeled, table)
    first = {}
    for ex in exemplars:
        first.setdefault(ex.task, ex)
    return X.SimLanguage(table=table, exemplars=exemplars,
                         embeddings=lang.embeddings_by_id(exemplars),
                         ids_by_task=lang.exemplar_ids_by_task(exemplars),
                         first_by_task=first)


def _env_for(cfg: dict):
    name = cfg["env"]["name"]
    if name == "cross":
        return sim.CrossWorld(
            success_radius=cfg.get("thresholds", {}).get("cross_success_radius", 0.05))
    scene_path = cfg["env"].get("scene", "builtin")
    scene = X.arm_scene() if scene_path == "builtin" else sim.load_scene(scene_path)
    return sim.ArmWorld(scene)


def _write_report(report: dict, out: str | None) -> None:
    payload = json.dumps(report, indent=2, default=_json_default)
    if out:
        with open(out, "w") as f:
            f.write(payload + "\n")
        click.echo(f"report written to {out}")
    else:
        click.echo(payload)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, M.ModelBundle):
        return f"<{obj.variant} bundle>"
    if isinstance(obj, C.JitterReport):
        return {"jitter_fraction": obj.jitter_fraction,
                "il_fixed_error": obj.il_fixed_error,
                "il_jitter_errors": obj.il_jitter_errors}
    raise TypeError(f"cannot serialize {type(obj)}")


def _plot_bars(path: str, labels, values, title: str, ylabel: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(labels, values, color=["#3465a4", "#cc0000", "#73d216", "#f57900"][: len(labels)])
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@click.group()
def main():
    """Language-modulated latent-action teleoperation workbench."""


def _common(fn):
    fn = click.option("--config", "config_path", default=None,
                      help="YAML config (packaged defaults when omitted)")(fn)
    fn = click.option("--seed", default=1, show_default=True, type=int)(fn)
    fn = click.option("--out", default=None, help="write the JSON report here")(fn)
    return fn


@main.command("gen-demos")
@_common
@click.option("--style", default=None, help="pure or sweeping (default from config)")
@click.option("--dataset", required=True, help="output demonstrations JSONL")
def gen_demos(config_path, seed, out, style, dataset):
    """Script demonstrations for every task of the configured env."""
    cfg = load_config(config_path)
    env = _env_for(cfg)
    language = _language_for(cfg)
    style = style or cfg["training"]["demo_style"]
    demos = D.generate_demo_set(env, env.tasks, cfg["training"]["demos_per_task"],
                                style, seed, dt=cfg["env"].get("dt_batch", 0.125))
    D.assign_utterances(demos, language.ids_by_task)
    D.save_demos(dataset, demos)
    _write_report({"demos": len(demos), "style": style, "dataset": dataset,
                   "steps": int(sum(d.length for d in demos))}, out)


@main.command()
@_common
@click.option("--dataset", required=True, help="demonstrations JSONL from gen-demos")
@click.option("--triples", "triples_out", required=True, help="output triples JSONL")
def augment(config_path, seed, out, dataset, triples_out):
    """Split demos into triples and apply both augmentations."""
    cfg = load_config(config_path)
    env = _env_for(cfg)
    demos = D.load_demos(dataset)
    a = cfg["augmentation"]
    aug = D.AugmentConfig(window_size=a["window_size"], noise_sigma=a["noise_sigma"],
                          noise_multiplier=a["noise_multiplier"])
    triples = D.build_triples(demos, aug, seed=seed, velocity_dims=env.velocity_dims)
    with open(triples_out, "w") as f:
        for t in triples:
            f.write(json.dumps({"utterance_id": t.utterance_id,
                                "s": [float(v) for v in t.s],
                                "a": [float(v) for v in t.a]},
                               separators=(",", ":")) + "\n")
    base = sum(d.length for d in demos)
    _write_report({"base_triples": int(base), "total_triples": len(triples),
                   "triples": triples_out}, out)


@main.command()
@_common
@click.option("--checkpoint", required=True, help="output model checkpoint path")
def train(config_path, seed, out, checkpoint):
    """Train the configured model variant on freshly scripted demos."""
    cfg = load_config(config_path)
    env = _env_for(cfg)
    language = _language_for(cfg)
    tr = cfg["training"]
    variant = cfg["model"]["variant"]
    if variant == "imitation":
        bundle, losses, _ = X.train_imitation(
            env, language, tr["demos_per_task"], seed=seed, epochs=tr["epochs"],
            style=cfg["training"].get("demo_style", "pure"),
            hidden_width=cfg["model"]["hidden_width"], batch_size=tr["batch_size"],
            noise_multiplier=cfg["augmentation"]["noise_multiplier"])
    else:
        bundle, losses, _ = X.train_latent(
            env, language, variant, cfg["model"]["latent_dim"], tr["demos_per_task"],
            seed=seed, epochs=tr["epochs"], style=tr.get("demo_style", "sweeping"),
            hidden_width=cfg["model"]["hidden_width"], batch_size=tr["batch_size"],
            noise_multiplier=cfg["augmentation"]["noise_multiplier"])
    if not np.isfinite(losses).all():
        raise NumericError("training diverged: non-finite loss")
    M.save_bundle(checkpoint, bundle)
    _write_report({"variant": variant, "checkpoint": checkpoint,
                   "initial_loss": losses[0], "final_loss": losses[-1],
                   "epochs": tr["epochs"]}, out)


@main.command("eval-cross")
@_common
@click.option("--plot", default=None, help="optional PNG path for the summary plot")
def eval_cross(config_path, seed, out, plot):
    """The three-model disambiguation experiment on the cross world."""
    cfg = load_config(config_path)
    ex = cfg["experiments"]
    report = X.cross_experiment(seed=seed,
                                demos_per_task=cfg["training"].get("demos_per_task", 25),
                                epochs=cfg["training"]["epochs"],
                                max_ticks=ex.get("max_ticks_cross", 200),
                                success_radius=cfg["thresholds"]["cross_success_radius"])
    for m in report["models"].values():
        m.pop("bundle", None)
    if plot:
        labels = list(report["models"])
        values = [report["models"][k]["commands_completed"] for k in labels]
        _plot_bars(plot, labels, values, "cross commands completed (of 4)", "commands")
    _write_report(report, out)


@main.command("eval-arm")
@_common
@click.option("--plot", default=None, help="optional PNG path for the summary plot")
def eval_arm(config_path, seed, out, plot):
    """Sample-efficiency comparison: latent expert vs imitation on the arm."""
    cfg = load_config(config_path)
    ex = cfg["experiments"]
    report = X.sample_efficiency_experiment(
        seed=seed, demos_per_task=cfg["training"].get("demos_per_task", 10),
        epochs=cfg["training"]["epochs"], seeds=range(ex.get("eval_seeds", 20)),
        max_ticks=ex.get("max_ticks_arm", 400))
    report.pop("bundles", None)
    report.pop("episodes", None)
    if plot:
        _plot_bars(plot, ["latent+expert", "imitation"],
                   [report["language"]["rates"]["completed"],
                    report["imitation"]["rates"]["completed"]],
                   "full-task completion rate", "rate")
    _write_report(report, out)


@main.command()
@_common
@click.argument("query")
def retrieve(config_path, seed, out, query):
    """Nearest training exemplar for a query utterance."""
    cfg = load_config(config_path)
    emb_kind = cfg.get("language", {}).get("embedder", "hash")
    if emb_kind == "pretrained":
        table_path = cfg["language"].get("pretrained_table", "builtin")
        table = lang.load_embedding_table(
            str(data_path("embeddings_pretrained.json")) if table_path == "builtin"
            else table_path)
        labeled = lang.load_exemplar_file(str(data_path("utterances_buffet.json")))
        exemplars = lang.build_exemplars(labeled, table)
    else:
        language = _language_for(cfg)
        table, exemplars = language.table, language.exemplars
    ex, similarity = lang.retrieve_nearest(
        query, table, exemplars,
        allow_hash_fallback=cfg.get("language", {}).get("allow_hash_fallback", True))
    _write_report({"query": query, "exemplar_id": ex.id, "task": ex.task,
                   "text": ex.text, "similarity": similarity}, out)


@main.command("filter-annotators")
@_common
@click.option("--corpus", default=None, help="annotator corpus JSON (builtin when omitted)")
@click.option("-k", default=15, show_default=True, type=int,
              help="how many annotators to drop")
@click.option("--include-self", is_flag=True,
              help="average over all annotators instead of leave-one-out")
def filter_annotators_cmd(config_path, seed, out, corpus, k, include_self):
    """Score annotators against consensus and drop the noisiest K."""
    cfg = load_config(config_path)
    corpus_path = corpus or str(data_path("annotators_buffet.json"))
    grid = lang.load_annotator_corpus(corpus_path)
    table_path = cfg.get("language", {}).get("pretrained_table", "builtin")
    table = lang.load_embedding_table(
        str(data_path("embeddings_pretrained.json")) if table_path == "builtin"
        else table_path)
    kept, scores = lang.filter_annotators(grid, table, k, include_self=include_self,
                                          allow_hash_fallback=True)
    _write_report({"kept": list(kept), "dropped": [a for a in grid.annotators if a not in kept],
                   "scores": {str(a): s for a, s in scores.items()}}, out)


@main.command("jitter-study")
@_common
@click.option("--plot", default=None, help="optional PNG path")
def jitter_study_cmd(config_path, seed, out, plot):
    """Sampling-rate sensitivity study (fixed vs jittered tick periods)."""
    cfg = load_config(config_path)
    ex = cfg["experiments"]
    report = X.jitter_experiment(
        seed=seed, demos_per_task=cfg["training"].get("demos_per_task", 10),
        epochs=cfg["training"]["epochs"], jitter_fraction=ex.get("jitter_fraction", 0.4),
        seeds=range(ex.get("eval_seeds", 20)), max_ticks=ex.get("max_ticks_arm", 400))
    report.pop("reports", None)
    if plot:
        _plot_bars(plot, ["fixed rate", f"jitter {report['jitter_fraction']}"],
                   [report["il_fixed_error_mean"], report["il_jitter_error_mean"]],
                   "imitation terminal EE error", "distance")
    _write_report(report, out)


@main.command("jerk-report")
@_common
@click.option("--plot", default=None, help="optional PNG path")
def jerk_report(config_path, seed, out, plot):
    """EE smoothness comparison: latent expert vs mode-switch baseline."""
    cfg = load_config(config_path)
    ex = cfg["experiments"]
    report = X.smoothness_experiment(
        seed=seed, demos_per_task=cfg["training"].get("demos_per_task", 15),
        epochs=cfg["training"]["epochs"], seeds=range(ex.get("eval_seeds", 20)),
        max_ticks=ex.get("max_ticks_arm", 400), window=ex.get("jerk_window", 10))
    report.pop("episodes", None)
    if plot:
        _plot_bars(plot, ["latent+expert", "mode-switch EE"],
                   [report["latent_mean_ee_jerk"], report["ee_baseline_mean_ee_jerk"]],
                   "mean windowed EE jerk", "jerk")
    _write_report(report, out)


@main.command()
@_common
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.option("--frontend", default=None, help="static assets dir (frontend/dist)")
@click.option("--record", default=None, help="record the event stream to this JSONL")
def serve(config_path, seed, out, host, port, frontend, record):
    """Run the live teleoperation service (wire protocol + browser client)."""
    from .server import resolve_bind, serve as run_server
    from .service import ServiceCore

    cfg = load_config(config_path)
    language = _language_for(cfg)
    checkpoints = {}
    for ck_id, path in (cfg.get("service", {}).get("checkpoints") or {}).items():
        checkpoints[ck_id] = M.load_bundle(path)
    core = ServiceCore(
        scene=X.arm_scene(), table=language.table, exemplars=language.exemplars,
        checkpoints=checkpoints, dt=cfg["env"].get("dt_live", 0.05),
        allow_hash_fallback=cfg.get("language", {}).get("allow_hash_fallback", True))
    bind_host, bind_port = resolve_bind(host, port)
    click.echo(f"serving on {bind_host}:{bind_port}")
    run_server(core, host=bind_host, port=bind_port, frontend_dir=frontend, record_path=record)


def entry() -> int:
    try:
        main(standalone_mode=False)
        return 0
    except (ConfigError, FileNotFoundError) as e:
        click.echo(f"config error: {e}", err=True)
        return 1
    except (NumericError, FloatingPointError) as e:
        click.echo(f"numeric failure: {e}", err=True)
        return 2
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.ClickException as e:
        e.show()
        return 1


if __name__ == "__main__":
    sys.exit(entry())

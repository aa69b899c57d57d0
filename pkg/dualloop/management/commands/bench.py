"""
Django management command for the agent bench: gen, run and report
"""

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rich.console import Console

from dualloop.conf import get_setting
from dualloop.corpus import corpus_to_json, generate_taskset
from dualloop.exceptions import DualLoopError
from dualloop.experiment import BACKENDS, emit_report, render_report, run_experiment
from dualloop.models import ExperimentRun
from dualloop.orchestrator import MODES, SCHEMES
from dualloop.serializers import load_corpus, load_registry, load_roles, load_run_config, load_topology

BUDGET_FLAGS = ("max_rounds", "max_replans", "react_steps", "few_shot_k")


class Command(BaseCommand):
    help = "Generate task corpora, run experiments and print reports"

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="subcommand", required=True)

        gen = subparsers.add_parser("gen", help="Generate a task corpus")
        gen.add_argument("--seed", type=int, default=0)
        gen.add_argument("--easy", type=int, default=10)
        gen.add_argument("--medium", type=int, default=10)
        gen.add_argument("--hard", type=int, default=10)
        gen.add_argument("--tools", help="Tool registry JSON (default: bundled registry)")
        gen.add_argument("--out", required=True, help="Corpus JSON file to write")

        run = subparsers.add_parser("run", help="Run schemes over a corpus and write a report")
        run.add_argument("--config", help="Run configuration JSON; flags override its values")
        run.add_argument("--corpus")
        run.add_argument("--topology")
        run.add_argument("--tools")
        run.add_argument("--roles")
        run.add_argument("--scheme", action="append", choices=SCHEMES, dest="schemes")
        run.add_argument("--mode", action="append", choices=MODES, dest="modes")
        run.add_argument("--backend", choices=BACKENDS)
        run.add_argument("--seed", type=int, help="First seed")
        run.add_argument("--seeds", type=int, help="Number of consecutive seeds")
        run.add_argument("--eps", type=float)
        run.add_argument("--p-tool", type=float, dest="p_tool")
        run.add_argument("--relief", type=float)
        run.add_argument("--max-rounds", type=int, dest="max_rounds")
        run.add_argument("--max-replans", type=int, dest="max_replans")
        run.add_argument("--react-steps", type=int, dest="react_steps")
        run.add_argument("--few-shot-k", type=int, dest="few_shot_k")
        run.add_argument("--no-memory", action="store_true", help="Disable experience retrieval")
        run.add_argument("--shared-memory", action="store_true", help="One experience store for all agents")
        run.add_argument("--memory-dir", help="Persist experience stores under this directory")
        run.add_argument(
            "--persist-memory", action="store_true", help="Persist experience stores under the MEMORY_DIR setting"
        )
        run.add_argument("--replay-log", help="LLM replay log (http: written, replay: read)")
        run.add_argument("--out", required=True, help="Report directory")
        run.add_argument("--record", action="store_true", help="Also store the run in the database")
        run.add_argument("--name", default="", help="Name of the recorded run")
        run.add_argument("--progress", action="store_true")

        report = subparsers.add_parser("report", help="Print the tables of a report directory")
        report.add_argument("--in", dest="in_dir", required=True)

    def handle(self, *args, **options):
        handlers = {"gen": self.handle_gen, "run": self.handle_run, "report": self.handle_report}
        try:
            handlers[options["subcommand"]](options)
        except (DualLoopError, OSError, ValueError) as e:
            errors = getattr(e, "errors", None)
            raise CommandError(f"{e} {errors}" if errors else str(e)) from e

    def handle_gen(self, options):
        registry = load_registry(options.get("tools"))
        counts = {"easy": options["easy"], "medium": options["medium"], "hard": options["hard"]}
        tasks = generate_taskset(options["seed"], counts, registry)
        out = Path(options["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="") as f:
            f.write(corpus_to_json(tasks, options["seed"]))
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(tasks)} tasks to {out}"))

    def run_overrides(self, options):
        overrides = {
            key: options.get(key)
            for key in ("corpus", "topology", "tools", "roles", "schemes", "modes", "backend",
                        "eps", "p_tool", "relief", "memory_dir", "replay_log")
        }
        if options.get("seed") is not None or options.get("seeds") is not None:
            first = options.get("seed") or 0
            overrides["seeds"] = list(range(first, first + (options.get("seeds") or 1)))
        if options.get("no_memory"):
            overrides["memory"] = False
        if options.get("persist_memory") and not options.get("memory_dir"):
            overrides["memory_dir"] = get_setting("MEMORY_DIR") or None
        if options.get("shared_memory"):
            overrides["shared_memory"] = True
        budgets = {key: options[key] for key in BUDGET_FLAGS if options.get(key) is not None}
        if budgets:
            overrides["budgets"] = budgets
        return overrides

    def handle_run(self, options):
        config = load_run_config(options.get("config"), self.run_overrides(options))
        registry = load_registry(config.tools)
        roles = load_roles(registry, config.roles)
        topology = load_topology(config.topology)
        tasks = load_corpus(config.corpus, registry)

        self.stdout.write(
            f"Running {len(tasks)} tasks x {len(config.schemes)} schemes x {len(config.modes)} modes "
            f"x {len(config.seeds)} seeds ({config.backend} backend)"
        )
        report = run_experiment(config, tasks, registry, roles, topology, progress=options.get("progress", False))
        paths = emit_report(report, options["out"])
        for path in paths:
            self.stdout.write(f"  wrote {path}")

        if options.get("record"):
            run = ExperimentRun.objects.create(
                name=options.get("name") or "",
                config=report.config,
                config_digest=report.config_digest,
                seeds=report.seeds,
                out_dir=str(options["out"]),
            )
            run.save_records(report.records)
            self.stdout.write(f"  recorded run {run.pk} ({len(report.records)} records)")

        successes = sum(1 for r in report.records if r.success)
        self.stdout.write(
            self.style.SUCCESS(f"Completed {len(report.records)} runs, {successes} successful")
        )

    def handle_report(self, options):
        folder = Path(options["in_dir"])
        if not folder.is_dir():
            raise CommandError(f"Report directory not found: {folder}")
        render_report(folder, Console(file=self.stdout, width=120))

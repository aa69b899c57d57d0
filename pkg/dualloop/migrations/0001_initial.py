import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("name", models.CharField(blank=True, default="", max_length=100)),
                ("config", models.JSONField(default=dict)),
                ("config_digest", models.CharField(db_index=True, max_length=64)),
                ("seeds", models.JSONField(default=list)),
                ("out_dir", models.CharField(blank=True, default="", max_length=255)),
                ("created_at", models.DateTimeField(default=django.utils.timezone.now)),
            ],
            options={
                "db_table": "experiment_runs",
                "ordering": ["-created_at"],
            },
        ),
        migrations.CreateModel(
            name="TaskRunRecord",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                (
                    "scheme",
                    models.CharField(
                        choices=[("dual-loop", "dual-loop"), ("react", "react"), ("flat", "flat")],
                        db_index=True,
                        max_length=20,
                    ),
                ),
                (
                    "mode",
                    models.CharField(
                        choices=[("local", "local"), ("cloud", "cloud"), ("collab", "collab")],
                        db_index=True,
                        max_length=20,
                    ),
                ),
                ("task_id", models.CharField(max_length=20)),
                ("seed", models.IntegerField()),
                (
                    "difficulty",
                    models.CharField(
                        choices=[("easy", "easy"), ("medium", "medium"), ("hard", "hard")], max_length=10
                    ),
                ),
                ("tool_count", models.PositiveSmallIntegerField()),
                (
                    "outcome",
                    models.CharField(
                        choices=[
                            ("success", "success"),
                            ("planning_failure", "planning_failure"),
                            ("execution_failure", "execution_failure"),
                            ("early_stop", "early_stop"),
                            ("budget_exhausted", "budget_exhausted"),
                        ],
                        max_length=20,
                    ),
                ),
                ("success", models.BooleanField(default=False)),
                ("failure_class", models.CharField(blank=True, max_length=20, null=True)),
                ("rounds", models.PositiveSmallIntegerField(default=0)),
                ("planning_invocations", models.PositiveIntegerField(default=0)),
                ("planning_latency_s", models.FloatField(default=0.0)),
                ("execution_latency_s", models.FloatField(default=0.0)),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="records",
                        to="dualloop.experimentrun",
                    ),
                ),
            ],
            options={
                "db_table": "task_run_records",
                "ordering": ["run", "scheme", "mode", "task_id", "seed"],
                "unique_together": {("run", "scheme", "mode", "task_id", "seed")},
            },
        ),
    ]

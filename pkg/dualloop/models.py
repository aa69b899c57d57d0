"""
Persisted experiment runs and their per-task records
"""

from django.db import models
from django.utils import timezone

from .corpus import DIFFICULTIES
from .orchestrator import MODES, OUTCOMES, SCHEMES


def _choices(values):
    return [(value, value) for value in values]


class ExperimentRun(models.Model):
    """One `bench run` invocation"""

    name = models.CharField(max_length=100, blank=True, default="")
    config = models.JSONField(default=dict)
    config_digest = models.CharField(max_length=64, db_index=True)
    seeds = models.JSONField(default=list)
    out_dir = models.CharField(max_length=255, blank=True, default="")
    created_at = models.DateTimeField(default=timezone.now)

    class Meta:
        db_table = "experiment_runs"
        ordering = ["-created_at"]

    @property
    def record_count(self):
        return self.records.count()

    @property
    def success_rate(self):
        total = self.record_count
        if not total:
            return 0.0
        return self.records.filter(success=True).count() / total

    def save_records(self, records):
        """Bulk-create TaskRunRecords from experiment TaskRecords"""
        return TaskRunRecord.objects.bulk_create(
            [TaskRunRecord.from_record(self, record) for record in records]
        )

    def __str__(self):
        return self.name or f"Run {self.config_digest[:12]}"


class TaskRunRecord(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="records")
    scheme = models.CharField(max_length=20, choices=_choices(SCHEMES), db_index=True)
    mode = models.CharField(max_length=20, choices=_choices(MODES), db_index=True)
    task_id = models.CharField(max_length=20)
    seed = models.IntegerField()
    difficulty = models.CharField(max_length=10, choices=_choices(DIFFICULTIES))
    tool_count = models.PositiveSmallIntegerField()
    outcome = models.CharField(max_length=20, choices=_choices(OUTCOMES))
    success = models.BooleanField(default=False)
    failure_class = models.CharField(max_length=20, blank=True, null=True)
    rounds = models.PositiveSmallIntegerField(default=0)
    planning_invocations = models.PositiveIntegerField(default=0)
    planning_latency_s = models.FloatField(default=0.0)
    execution_latency_s = models.FloatField(default=0.0)

    class Meta:
        db_table = "task_run_records"
        ordering = ["run", "scheme", "mode", "task_id", "seed"]
        unique_together = ("run", "scheme", "mode", "task_id", "seed")

    @classmethod
    def from_record(cls, run, record):
        return cls(
            run=run,
            scheme=record.scheme,
            mode=record.mode,
            task_id=record.task,
            seed=record.seed,
            difficulty=record.difficulty,
            tool_count=record.tool_count,
            outcome=record.outcome,
            success=record.success,
            failure_class=record.failure_class,
            rounds=record.rounds,
            planning_invocations=record.planning_invocations,
            planning_latency_s=record.planning_latency_s,
            execution_latency_s=record.execution_latency_s,
        )

    def __str__(self):
        return f"{self.task_id} {self.scheme}/{self.mode} seed {self.seed}: {self.outcome}"

"""
Django admin for experiment runs
"""

from django.contrib import admin

from .models import ExperimentRun, TaskRunRecord


class TaskRunRecordInline(admin.TabularInline):
    model = TaskRunRecord
    extra = 0
    can_delete = False
    fields = ("scheme", "mode", "task_id", "seed", "difficulty", "tool_count", "outcome", "execution_latency_s")
    readonly_fields = fields
    show_change_link = True


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("__str__", "record_count_display", "success_rate_display", "out_dir", "created_at")
    search_fields = ("name", "config_digest", "out_dir")
    readonly_fields = ("config_digest", "created_at")
    ordering = ("-created_at",)
    inlines = [TaskRunRecordInline]

    def record_count_display(self, obj):
        return obj.record_count
    record_count_display.short_description = "Records"

    def success_rate_display(self, obj):
        return "{:.1%}".format(obj.success_rate)
    success_rate_display.short_description = "SR"


@admin.register(TaskRunRecord)
class TaskRunRecordAdmin(admin.ModelAdmin):
    list_display = (
        "task_id", "run", "scheme", "mode", "seed", "difficulty", "tool_count",
        "outcome", "planning_invocations", "execution_latency_s",
    )
    list_filter = ("scheme", "mode", "difficulty", "outcome", "success")
    search_fields = ("task_id",)
    ordering = ("run", "scheme", "mode", "task_id", "seed")

"""
Django REST Framework serializers: JSON configuration files and run records
"""

import json
from pathlib import Path

from rest_framework import serializers

from .conf import data_path
from .corpus import DIFFICULTIES, SCENARIOS, Task
from .exceptions import ConfigError, ParseError
from .experiment import BACKENDS, RunConfig
from .models import ExperimentRun, TaskRunRecord
from .orchestrator import MODES, SCHEMES, Budgets, RoleProfile
from .plan import ToolRegistry, ToolSpec, parse_plan
from .planners import ERROR_KINDS
from .topology import TIERS, DeviceTopology


class ToolSpecSerializer(serializers.Serializer):
    name = serializers.RegexField(r"^[a-z][a-z0-9_]*$")
    param_names = serializers.ListField(child=serializers.RegexField(r"^[a-z][a-z0-9_]*$"), allow_empty=True)
    work = serializers.FloatField()
    output_size = serializers.FloatField(default=0.0, min_value=0.0)
    fallible = serializers.BooleanField(default=True)
    role = serializers.CharField(allow_blank=True, default="")
    description = serializers.CharField(allow_blank=True, default="")

    def validate_work(self, value):
        if value <= 0:
            raise serializers.ValidationError("work must be > 0")
        return value

    def validate_param_names(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("duplicate parameter names")
        return value

    def create(self, validated_data):
        data = dict(validated_data)
        data["param_names"] = tuple(data["param_names"])
        return ToolSpec(**data)


class ToolRegistrySerializer(serializers.Serializer):
    tools = ToolSpecSerializer(many=True)

    def validate_tools(self, value):
        names = [tool["name"] for tool in value]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise serializers.ValidationError(f"duplicate tools: {duplicates}")
        return value

    def create(self, validated_data):
        return ToolRegistry(ToolSpecSerializer().create(tool) for tool in validated_data["tools"])


class RoleSerializer(serializers.Serializer):
    role = serializers.CharField()
    system_prompt = serializers.CharField()
    tools = serializers.ListField(child=serializers.CharField(), allow_empty=False)

    def validate_tools(self, value):
        registry = self.context.get("registry")
        if registry is not None:
            unknown = [name for name in value if name not in registry]
            if unknown:
                raise serializers.ValidationError(f"unknown tools: {unknown}")
        return value

    def create(self, validated_data):
        return RoleProfile(validated_data["role"], validated_data["system_prompt"], tuple(validated_data["tools"]))


class DeviceSerializer(serializers.Serializer):
    id = serializers.CharField()
    tier = serializers.ChoiceField(choices=TIERS)
    speed = serializers.FloatField()

    def validate_speed(self, value):
        if value <= 0:
            raise serializers.ValidationError("speed must be > 0")
        return value


class LinkSerializer(serializers.Serializer):
    latency_s = serializers.FloatField(min_value=0.0)
    bandwidth_kbps = serializers.FloatField()

    def validate_bandwidth_kbps(self, value):
        if value <= 0:
            raise serializers.ValidationError("bandwidth must be > 0")
        return value


class TopologySerializer(serializers.Serializer):
    devices = DeviceSerializer(many=True, allow_empty=False)
    links = serializers.DictField(child=LinkSerializer())

    def validate(self, data):
        ids = [device["id"] for device in data["devices"]]
        if len(set(ids)) != len(ids):
            raise serializers.ValidationError({"devices": "device ids must be unique"})
        pairs = set()
        for key in data["links"]:
            parts = tuple(key.split("-"))
            if len(parts) != 2 or any(part not in TIERS for part in parts):
                raise serializers.ValidationError({"links": f"invalid tier pair {key!r}"})
            pairs.add(tuple(sorted(parts, key=TIERS.index)))
        missing = [f"{a}-{b}" for i, a in enumerate(TIERS) for b in TIERS[i:] if (a, b) not in pairs]
        if missing:
            raise serializers.ValidationError({"links": f"missing tier pairs {missing}"})
        return data

    def create(self, validated_data):
        return DeviceTopology.from_dict(validated_data)


class TaskSerializer(serializers.Serializer):
    id = serializers.CharField()
    instruction = serializers.CharField()
    scenario = serializers.ChoiceField(choices=SCENARIOS)
    difficulty = serializers.ChoiceField(choices=DIFFICULTIES)
    home_terminal = serializers.CharField(default="terminal-00")
    fixture = serializers.DictField(default=dict)
    ground_truth = serializers.CharField()

    def validate(self, data):
        registry = self.context["registry"]
        try:
            parse_plan(data["ground_truth"], registry)
        except ParseError as e:
            raise serializers.ValidationError({"ground_truth": str(e)})
        try:
            Task.from_dict(data, registry)
        except ValueError as e:
            raise serializers.ValidationError({"difficulty": str(e)})
        return data

    def create(self, validated_data):
        return Task.from_dict(validated_data, self.context["registry"])


class CorpusSerializer(serializers.Serializer):
    seed = serializers.IntegerField(allow_null=True, required=False)
    tasks = serializers.ListField(child=serializers.DictField())

    def validate_tasks(self, value):
        ids = [task.get("id") for task in value]
        if len(set(ids)) != len(ids):
            raise serializers.ValidationError("task ids must be unique")
        return value


class BudgetsSerializer(serializers.Serializer):
    max_rounds = serializers.IntegerField(min_value=0, default=4)
    max_replans = serializers.IntegerField(min_value=0, default=2)
    react_steps = serializers.IntegerField(min_value=0, default=12)
    few_shot_k = serializers.IntegerField(min_value=0, max_value=3, default=3)


class RunConfigSerializer(serializers.Serializer):
    corpus = serializers.CharField()
    topology = serializers.CharField(allow_null=True, required=False, default=None)
    tools = serializers.CharField(allow_null=True, required=False, default=None)
    roles = serializers.CharField(allow_null=True, required=False, default=None)
    schemes = serializers.ListField(child=serializers.ChoiceField(choices=SCHEMES), allow_empty=False, default=list(SCHEMES))
    modes = serializers.ListField(child=serializers.ChoiceField(choices=MODES), allow_empty=False, default=["collab"])
    backend = serializers.ChoiceField(choices=BACKENDS, default="scripted")
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), allow_empty=False, default=[0])
    eps = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.05)
    error_mix = serializers.DictField(child=serializers.FloatField(min_value=0.0), required=False)
    relief = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    eps_min = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.005)
    p_tool = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    budgets = BudgetsSerializer(required=False)
    memory = serializers.BooleanField(default=True)
    shared_memory = serializers.BooleanField(default=False)
    memory_dir = serializers.CharField(allow_null=True, required=False, default=None)
    replay_log = serializers.CharField(allow_null=True, required=False, default=None)

    def validate_error_mix(self, value):
        unknown = sorted(set(value) - set(ERROR_KINDS))
        if unknown:
            raise serializers.ValidationError(f"unknown error kinds: {unknown}")
        if sum(value.values()) <= 0:
            raise serializers.ValidationError("error mix weights must not all be zero")
        return value

    def validate(self, data):
        if data.get("backend") == "replay" and not data.get("replay_log"):
            raise serializers.ValidationError({"replay_log": "the replay backend needs a replay log"})
        return data

    def create(self, validated_data):
        data = dict(validated_data)
        data["budgets"] = Budgets(**data["budgets"]) if data.get("budgets") else Budgets()
        if not data.get("error_mix"):
            data.pop("error_mix", None)
        return RunConfig(**data)


class TaskRunRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = TaskRunRecord
        exclude = ("run",)


class ExperimentRunSerializer(serializers.ModelSerializer):
    record_count = serializers.ReadOnlyField()
    success_rate = serializers.ReadOnlyField()

    class Meta:
        model = ExperimentRun
        fields = "__all__"
        read_only_fields = ("created_at",)


# Loaders


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e


def _validated(serializer, path):
    if not serializer.is_valid():
        raise ConfigError(f"invalid configuration in {path}", serializer.errors)
    return serializer.save()


def load_registry(path=None) -> ToolRegistry:
    path = Path(path) if path else data_path("tools.json")
    data = _read_json(path)
    if isinstance(data, list):
        data = {"tools": data}
    return _validated(ToolRegistrySerializer(data=data), path)


def load_roles(registry: ToolRegistry, path=None):
    path = Path(path) if path else data_path("roles.json")
    serializer = RoleSerializer(data=_read_json(path), many=True, context={"registry": registry})
    roles = _validated(serializer, path)
    covered = {tool for role in roles for tool in role.tools}
    missing = sorted(set(registry.names) - covered)
    if missing:
        raise ConfigError(f"tools not covered by any role in {path}", {"tools": missing})
    return roles


def load_topology(path=None) -> DeviceTopology:
    path = Path(path) if path else data_path("topology.json")
    return _validated(TopologySerializer(data=_read_json(path)), path)


def load_corpus(path, registry: ToolRegistry):
    corpus = CorpusSerializer(data=_read_json(path))
    if not corpus.is_valid():
        raise ConfigError(f"invalid corpus in {path}", corpus.errors)
    tasks = TaskSerializer(data=corpus.validated_data["tasks"], many=True, context={"registry": registry})
    return _validated(tasks, path)


def load_run_config(path=None, overrides=None) -> RunConfig:
    """Run config from a JSON file (optional) with flag overrides on top"""
    data = _read_json(path) if path else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "budgets" in overrides:
        overrides["budgets"] = {**(data.get("budgets") or {}), **overrides["budgets"]}
    data.update(overrides)
    return _validated(RunConfigSerializer(data=data), path or "command-line options")

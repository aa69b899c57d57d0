"""
Read-only REST API over persisted experiment runs
"""

from rest_framework import viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from .models import ExperimentRun
from .serializers import ExperimentRunSerializer, TaskRunRecordSerializer


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """Runs recorded with `bench run --record`"""

    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer

    @action(detail=True, methods=["get"])
    def records(self, request, pk=None):
        """Per-task records of a run, filterable by scheme, mode and outcome"""
        run = self.get_object()
        records = run.records.all()
        for field in ("scheme", "mode", "outcome", "difficulty"):
            value = request.query_params.get(field)
            if value:
                records = records.filter(**{field: value})
        serializer = TaskRunRecordSerializer(records, many=True)
        return Response({"count": len(serializer.data), "results": serializer.data})

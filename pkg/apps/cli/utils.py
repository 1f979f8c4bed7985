import json

from django.core.management.base import CommandError
from rest_framework.exceptions import ValidationError

from apps.base.exceptions import PRMPPIError
from apps.base.utils.renderers import render_exception

from .config import config_from_options
from .serializers import RunConfigSerializer


def command_error(exc):
    """Wrap ``exc`` in a CommandError carrying the rendered error payload."""
    return CommandError(json.dumps(render_exception(exc), sort_keys=True))


def validated_serializer(options):
    """Build and validate the run configuration of a command invocation.

    Raises:
        CommandError: on any configuration or validation error.
    """
    try:
        serializer = RunConfigSerializer(data=config_from_options(options))
        serializer.is_valid(raise_exception=True)
    except (PRMPPIError, ValidationError) as exc:
        raise command_error(exc) from exc
    return serializer

import json
import os
import tempfile
from pathlib import Path

from django.core.serializers.json import DjangoJSONEncoder


def _atomic_target(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    os.close(handle)
    return path, Path(temp_name)


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temp file and an atomic rename."""
    path, temp = _atomic_target(path)
    try:
        temp.write_text(text, encoding='utf-8')
        os.replace(temp, path)
    finally:
        if temp.exists():
            temp.unlink()
    return path


def atomic_write_json(path, payload):
    text = json.dumps(payload, cls=DjangoJSONEncoder, indent=2, sort_keys=True) + '\n'
    return atomic_write_text(path, text)


def atomic_write_frame(path, frame):
    """Write a pandas frame as CSV in full double precision, atomically."""
    path, temp = _atomic_target(path)
    try:
        frame.to_csv(temp, index=False, float_format='%.17g', lineterminator='\n')
        os.replace(temp, path)
    finally:
        if temp.exists():
            temp.unlink()
    return path

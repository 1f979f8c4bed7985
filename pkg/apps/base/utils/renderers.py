from apps.base.exceptions import PRMPPIError


def render_exception(exc):
    """Render any exception in the consistent error payload used by the CLI."""
    if isinstance(exc, PRMPPIError):
        payload = {
            'error': str(exc),
            'code': exc.code,
        }
        details = {
            key: value for key, value in exc.details.items()
            if isinstance(value, (int, float, str, bool))
        }
        if details:
            payload['details'] = details
        return payload

    # DRF validation errors carry field-specific messages
    detail = getattr(exc, 'detail', None)
    if isinstance(detail, dict):
        return {
            'errors': {key: [str(item) for item in value] if isinstance(value, list) else str(value)
                       for key, value in detail.items()},
            'code': 'validation_error',
        }
    if isinstance(detail, list):
        return {
            'error': str(detail[0]) if detail else str(exc),
            'code': 'validation_error',
        }

    return {
        'error': str(exc),
        'code': getattr(exc, 'code', 'error'),
    }

# utils/validation.py - Input validation utilities
import math

from models.errors import DomainError


def validate_proportion(p, name='p', allow_one=False):
    """Return p as float; raise DomainError unless 0 < p < 1 (or <= 1 with allow_one)."""
    try:
        value = float(p)
    except (ValueError, TypeError):
        raise DomainError(f'{name} must be a number', field=name, value=repr(p))
    upper_ok = value <= 1 if allow_one else value < 1
    if not (math.isfinite(value) and value > 0 and upper_ok):
        bound = '(0, 1]' if allow_one else '(0, 1)'
        raise DomainError(f'{name}={value} is outside {bound}', field=name, value=value)
    return value


def validate_finite(x, name='value'):
    try:
        value = float(x)
    except (ValueError, TypeError):
        raise DomainError(f'{name} must be a number', field=name, value=repr(x))
    if not math.isfinite(value):
        raise DomainError(f'{name} must be finite', field=name, value=str(value))
    return value


def validate_count(n, name='count', minimum=0):
    """Counts are non-negative integers; strings must be plain digits (no separators)."""
    if isinstance(n, str):
        cleaned = n.strip()
        if not cleaned.isdigit():
            raise DomainError(f'{name} must be a non-negative integer, got {n!r}', field=name)
        value = int(cleaned)
    elif isinstance(n, bool):
        raise DomainError(f'{name} must be an integer', field=name)
    else:
        try:
            value = int(n)
        except (ValueError, TypeError):
            raise DomainError(f'{name} must be an integer', field=name, value=repr(n))
        if value != n:
            raise DomainError(f'{name} must be an integer, got {n!r}', field=name)
    if value < minimum:
        raise DomainError(f'{name}={value} is below {minimum}', field=name, value=value)
    return value


def validate_turnout(turnout):
    """Turnout for the eligible-majority arithmetic must exceed one half."""
    value = validate_proportion(turnout, name='turnout', allow_one=True)
    if value <= 0.5:
        raise DomainError(
            f'turnout={value} leaves an absolute majority of the electorate unattainable',
            field='turnout', value=value)
    return value

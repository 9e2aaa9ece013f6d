"""Utils.

Validation helpers shared by the configuration and credential checks, and the
exceptions raised on hard failures.
"""

# standard
from functools import wraps
from inspect import signature
from os import environ
from typing import Any, Callable, Dict, Mapping, Sequence

RAISE_ENV = "SGPBFT_RAISE_VALIDATION_ERROR"
_HIDDEN = ("func", "reason")


class ValidationError(Exception):
    """Falsy result of a failed validator.

    The call arguments are exposed as attributes; `reason` is set when the
    check failed with an exception rather than a plain `False`.
    """

    def __init__(self, function: Callable[..., Any], arg_dict: Dict[str, Any], message: str = ""):
        """Record the failed call."""
        if message:
            self.reason = message
        self.func = function
        self.__dict__.update(arg_dict)

    @property
    def arguments(self):
        """Call arguments by parameter name."""
        return {key: value for key, value in self.__dict__.items() if key not in _HIDDEN}

    def __repr__(self):
        """`ValidationError(func=..., args={...})`."""
        return f"ValidationError(func={self.func.__name__}, args={self.arguments})"

    def __str__(self):
        """The reason if there is one."""
        return getattr(self, "reason", "") or repr(self)

    def __bool__(self):
        """Always false."""
        return False


class ConfigurationError(ValueError):
    """Engine or scenario parameters violate a protocol precondition."""


class RegistrationError(ValueError):
    """Vehicle registration was refused by the service provider."""


class LedgerError(ValueError):
    """An append would break the ledger's uniqueness invariant."""


def _call_arguments(func: Callable[..., Any], args: Sequence[Any], kwargs: Mapping[str, Any]):
    try:
        bound = signature(func).bind_partial(*args, **kwargs)
    except TypeError:
        return {**{f"arg{index}": value for index, value in enumerate(args)}, **kwargs}
    return dict(bound.arguments)


def _raise_requested(kwargs: Dict[str, Any], /):
    requested = bool(kwargs.pop("r_ve", False))
    return requested or environ.get(RAISE_ENV, "False") == "True"


def validator(func: Callable[..., Any]):
    """Turn a predicate into a validator.

    The wrapped function returns `True` when `func` does, and a falsy
    `ValidationError` when `func` returns something falsy or raises
    `ValueError`, `TypeError` or `ArithmeticError`.

    Examples:
        >>> @validator
        ... def quorum(votes, f):
        ...     return votes >= 2 * f + 1
        >>> quorum(3, 1)
        True
        >>> quorum(2, 1)
        ValidationError(func=quorum, args={'votes': 2, 'f': 1})

    Args:
        func:
            Predicate to wrap.

    Returns:
        (Callable[..., ValidationError | Literal[True]]):
            The validator.

    Raises:
        (ValidationError): Instead of returning it, if the call passes `r_ve=True`
            or `SGPBFT_RAISE_VALIDATION_ERROR` is `True`.
    """

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any):
        raise_failure = _raise_requested(kwargs)
        cause = None
        try:
            if func(*args, **kwargs):
                return True
            failure = ValidationError(func, _call_arguments(func, args, kwargs))
        except (ValueError, TypeError, ArithmeticError) as exp:
            cause = exp
            failure = ValidationError(func, _call_arguments(func, args, kwargs), str(exp))
        if raise_failure:
            raise failure from cause
        return failure

    return wrapper

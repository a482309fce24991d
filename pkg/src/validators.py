"""
Input validation module for the RTV solver suite.
"""

import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

Point = Tuple[float, float]

# Tolerance used when checking metric axioms on explicit matrices.
METRIC_TOLERANCE = 1e-9


class ValidationError(Exception):
    """Custom exception for validation errors."""

    pass


def validate_number(value: Any, field: str) -> float:
    """
    Validate a finite real number.

    Args:
        value: The value to validate
        field: Field name used in error messages

    Returns:
        Validated float

    Raises:
        ValidationError: If value is not a finite number
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(
            f"{field} must be a number, got {type(value).__name__}"
        )
    if not math.isfinite(value):
        raise ValidationError(f"{field} must be finite, got {value}")
    return float(value)


def validate_non_negative(value: Any, field: str) -> float:
    """
    Validate a non-negative real number.

    Args:
        value: The value to validate
        field: Field name used in error messages

    Returns:
        Validated float

    Raises:
        ValidationError: If value is negative or not a number
    """
    number = validate_number(value, field)
    if number < 0:
        raise ValidationError(f"{field} must be >= 0, got {value}")
    return number


def validate_positive(value: Any, field: str) -> float:
    """
    Validate a strictly positive real number.

    Raises:
        ValidationError: If value is not > 0
    """
    number = validate_number(value, field)
    if number <= 0:
        raise ValidationError(f"{field} must be > 0, got {value}")
    return number


def validate_int(value: Any, field: str, minimum: Optional[int] = None) -> int:
    """
    Validate an integer with an optional lower bound.

    Args:
        value: The value to validate
        field: Field name used in error messages
        minimum: Smallest allowed value

    Returns:
        Validated integer

    Raises:
        ValidationError: If value is not an integer or is below minimum
    """
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(
            f"{field} must be an integer, got {type(value).__name__}"
        )
    if minimum is not None and value < minimum:
        raise ValidationError(f"{field} must be at least {minimum}, got {value}")
    return value


def validate_point(value: Any, field: str) -> Point:
    """
    Validate a 2D point given as [x, y].

    Raises:
        ValidationError: If value is not a pair of finite numbers
    """
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValidationError(f"{field} must be an [x, y] pair")
    return (
        validate_number(value[0], f"{field}[0]"),
        validate_number(value[1], f"{field}[1]"),
    )


def validate_unique_ids(ids: Sequence[int], field: str) -> List[int]:
    """
    Validate that ids are unique.

    Raises:
        ValidationError: If an id repeats
    """
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"{field} contains duplicate id {i}")
        seen.add(i)
    return list(ids)


def validate_metric_matrix(
    matrix: Any, points: Any, field: str = "metric"
) -> Tuple[List[Point], List[List[float]]]:
    """
    Validate an explicit distance matrix over a list of points.

    The matrix must be square over the points, symmetric, non-negative,
    zero on the diagonal and satisfy the triangle inequality.

    Args:
        matrix: Nested list of distances
        points: List of [x, y] points indexing the matrix
        field: Field name used in error messages

    Returns:
        Validated (points, matrix)

    Raises:
        ValidationError: If any metric axiom fails
    """
    if not isinstance(points, list) or not isinstance(matrix, list):
        raise ValidationError(f"{field} must contain 'matrix' and 'points' arrays")

    pts = [validate_point(p, f"{field}.points[{i}]") for i, p in enumerate(points)]
    if len(set(pts)) != len(pts):
        raise ValidationError(f"{field}.points must be distinct")

    n = len(pts)
    if len(matrix) != n or any(
        not isinstance(row, list) or len(row) != n for row in matrix
    ):
        raise ValidationError(f"{field}.matrix must be square of size {n}")

    dist = [
        [validate_number(matrix[i][j], f"{field}.matrix[{i}][{j}]") for j in range(n)]
        for i in range(n)
    ]

    for i in range(n):
        if abs(dist[i][i]) > METRIC_TOLERANCE:
            raise ValidationError(f"{field}.matrix[{i}][{i}] must be 0")
        for j in range(n):
            if dist[i][j] < 0:
                raise ValidationError(f"{field}.matrix[{i}][{j}] must be >= 0")
            if abs(dist[i][j] - dist[j][i]) > METRIC_TOLERANCE:
                raise ValidationError(
                    f"{field}.matrix must be symmetric, "
                    f"[{i}][{j}]={dist[i][j]} != [{j}][{i}]={dist[j][i]}"
                )

    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][j] > dist[i][k] + dist[k][j] + METRIC_TOLERANCE:
                    raise ValidationError(
                        f"{field}.matrix violates the triangle inequality "
                        f"at ({i}, {k}, {j})"
                    )

    return pts, dist


def validate_choice(value: Any, field: str, choices: Sequence[str]) -> str:
    """
    Validate that value is one of the allowed strings.

    Raises:
        ValidationError: If value is not among choices
    """
    if value not in choices:
        raise ValidationError(
            f"{field} must be one of {', '.join(choices)}, got '{value}'"
        )
    return value


def validate_max_trip_size(value: Optional[int]) -> Optional[int]:
    """
    Validate the trip-size bound used by trip generation and pricing.

    Raises:
        ValidationError: If value is given and smaller than 1
    """
    if value is None:
        return None
    return validate_int(value, "max_trip_size", minimum=1)


def validate_trials(value: Any) -> int:
    """
    Validate a Monte-Carlo trial count.

    Raises:
        ValidationError: If value is not an integer >= 1
    """
    return validate_int(value, "trials", minimum=1)


def validate_seed(value: Any, field: str = "seed") -> int:
    """
    Validate a 64-bit seed.

    Raises:
        ValidationError: If value is not an integer in [0, 2**64)
    """
    seed = validate_int(value, field, minimum=0)
    if seed >= 1 << 64:
        raise ValidationError(f"{field} must fit in 64 bits, got {seed}")
    return seed


def validate_object(value: Any, field: str, required: Sequence[str]) -> Dict[str, Any]:
    """
    Validate a JSON object and the presence of required keys.

    Args:
        value: Parsed JSON value
        field: Field name used in error messages
        required: Keys that must be present

    Returns:
        The object

    Raises:
        ValidationError: If value is not an object or a key is missing
    """
    if not isinstance(value, dict):
        raise ValidationError(f"{field} must be a JSON object")
    for key in required:
        if key not in value:
            raise ValidationError(f"{field} must contain '{key}' field")
    return value

"""
Utility for resolving environment identifiers to environment files.
"""

import os
from pathlib import Path
from typing import List, Optional

from .exceptions import FileLoadError
from .geom import Environment


def get_data_directory() -> Optional[str]:
    """
    Get the path to the directory containing the built-in environments.

    Returns:
        Path to the environments directory, or None if not found
    """
    package_data_dir = Path(__file__).parent / "data" / "environments"
    if package_data_dir.exists():
        return str(package_data_dir)
    return None


def get_fixture_directory() -> Optional[str]:
    """Path to the shipped regression instances, or None if not found."""
    fixture_dir = Path(__file__).parent / "data" / "fixtures"
    if fixture_dir.exists():
        return str(fixture_dir)
    return None


def get_available_environments() -> List[str]:
    """
    Get a list of available built-in environments.

    Returns:
        List of environment identifiers (without .yaml extension)
    """
    data_dir = get_data_directory()
    if not data_dir:
        return []
    return sorted(
        file.rsplit(".", 1)[0]
        for file in os.listdir(data_dir)
        if file.endswith(".yaml") or file.endswith(".yml")
    )


def resolve_environment(identifier: str) -> Optional[str]:
    """
    Resolve an environment identifier to a file path.

    This function supports:
    1. Built-in environment identifiers (e.g., "maze")
    2. Relative or absolute file paths (e.g., "./warehouse.yaml")

    Args:
        identifier: Environment identifier or file path

    Returns:
        Full path to the YAML file, or None if not found
    """
    if os.path.exists(identifier):
        return os.path.abspath(identifier)
    if "/" in identifier or "\\" in identifier:
        return None

    data_dir = get_data_directory()
    if data_dir:
        for extension in ("yaml", "yml"):
            path = os.path.join(data_dir, f"{identifier}.{extension}")
            if os.path.exists(path):
                return path
    return None


def load_environment(identifier: str) -> Environment:
    """
    Resolve and load an environment.

    Raises:
        FileLoadError: If the identifier resolves to nothing or the file is
            not a valid environment.
    """
    from .files import load_environment_file

    path = resolve_environment(identifier)
    if path is None:
        raise FileLoadError(
            f"Unknown environment '{identifier}'. {format_available_environments()}"
        )
    env = load_environment_file(path)
    if not os.path.exists(identifier):
        # Built-ins carry their identifier as name.
        env = Environment(env.boundary, env.obstacles, name=identifier)
    return env


def format_available_environments() -> str:
    """
    Format the available environments for display in help text.

    Returns:
        Formatted string listing available environments
    """
    environments = get_available_environments()
    if not environments:
        return "No built-in environments found."
    return "Available built-in environments:\n  " + "\n  ".join(environments)

"""Resource providers for packaged data and run artifact directories."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from importlib.resources import files
from pathlib import Path
from typing import List, Union

logger = logging.getLogger(__name__)


class ResourceProvider(ABC):
    """Read-only view over a tree of text resources."""

    @abstractmethod
    def get_resource_content(self, path: str) -> str:
        """Return the text of the resource at ``path``."""

    @abstractmethod
    def list_resources(self, path: str) -> List[str]:
        """List entries below ``path`` (empty when it is not a directory)."""

    @abstractmethod
    def resource_exists(self, path: str) -> bool:
        """Check whether ``path`` names a file or a directory."""


class PackageResourceProvider(ResourceProvider):
    """Serves files shipped under ``<package>/resources`` via importlib.resources."""

    def __init__(self, package_name: str = "longform_mqm"):
        self.package_name = package_name

    def _resolve(self, path: str):
        resource_path = files(self.package_name).joinpath("resources")
        for part in path.strip("/").split("/"):
            if part:
                resource_path = resource_path.joinpath(part)
        return resource_path

    def get_resource_content(self, path: str) -> str:
        resource_path = self._resolve(path)
        if not resource_path.is_file():
            raise FileNotFoundError(f"Resource '{path}' not found in {self.package_name}")
        return resource_path.read_text(encoding="utf-8")

    def list_resources(self, path: str) -> List[str]:
        try:
            resource_path = self._resolve(path)
            if resource_path.is_dir():
                return sorted(entry.name for entry in resource_path.iterdir())
        except (FileNotFoundError, NotADirectoryError, PermissionError) as e:
            logger.debug("Cannot list package resources at %s: %s", path, e)
        return []

    def resource_exists(self, path: str) -> bool:
        try:
            resource_path = self._resolve(path)
            return resource_path.is_file() or resource_path.is_dir()
        except (FileNotFoundError, PermissionError) as e:
            logger.debug("Cannot stat package resource %s: %s", path, e)
            return False


class RunArtifactProvider(ResourceProvider):
    """
    Serves run directories below an output root.

    Paths are relative to the root; anything resolving outside it is treated
    as missing.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root).resolve()

    def _resolve(self, path: str) -> Path:
        # Resolve symlinks and ".." before checking containment
        candidate = (self.root / path.strip("/")).resolve()
        if candidate != self.root and self.root not in candidate.parents:
            raise PermissionError(f"Path escapes artifact root: {path}")
        return candidate

    def get_resource_content(self, path: str) -> str:
        target = self._resolve(path)
        if not target.is_file():
            raise FileNotFoundError(f"Artifact '{path}' not found")
        return target.read_text(encoding="utf-8")

    def list_resources(self, path: str) -> List[str]:
        try:
            target = self._resolve(path)
        except PermissionError as e:
            logger.warning("%s", e)
            return []
        if not target.is_dir():
            return []
        return sorted(entry.name for entry in target.iterdir())

    def resource_exists(self, path: str) -> bool:
        try:
            return self._resolve(path).exists()
        except PermissionError:
            return False

    def list_runs(self) -> List[str]:
        """Directories under the root that hold a manifest.json."""
        if not self.root.is_dir():
            return []
        return sorted(
            entry.name
            for entry in self.root.iterdir()
            # A run directory without a manifest is still being written
            if entry.is_dir() and (entry / "manifest.json").is_file()
        )

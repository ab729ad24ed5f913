"""Read-only MCP server exposing evaluation run artifacts."""

import json
import logging
import mimetypes
import os
from typing import Optional

from dotenv import load_dotenv
from fastmcp import FastMCP
from fastmcp.resources import TextResource
from mcp.shared.exceptions import ErrorData, McpError
from pydantic import AnyUrl

from longform_mqm.resources import RunArtifactProvider

logger = logging.getLogger(__name__)

mimetypes.init()
mimetypes.add_type("application/json", ".json")
mimetypes.add_type("application/jsonl", ".jsonl")
mimetypes.add_type("text/csv", ".csv")

SCHEME = "mqm-runs"
RUNS_ROOT_ENV = "LONGFORM_MQM_RUNS"

mcp: FastMCP = FastMCP()


def _default_provider() -> RunArtifactProvider:
    return RunArtifactProvider(os.getenv(RUNS_ROOT_ENV, "runs"))


def _mime_type(file_name: str) -> str:
    guess, _ = mimetypes.guess_type(file_name)
    return guess if guess is not None else "text/plain"


def _not_found(what: str) -> McpError:
    return McpError(ErrorData(message=f"Unknown resource: {what} not found", code=404))


def create_server(provider: Optional[RunArtifactProvider] = None) -> FastMCP:
    """Create an MCP server over the run directories of ``provider``.

    Args:
        provider: RunArtifactProvider rooted at an output directory.
            Defaults to ``$LONGFORM_MQM_RUNS`` or ``./runs``.

    Returns:
        FastMCP server instance with registered resources
    """
    runs = provider or _default_provider()
    server: FastMCP = FastMCP()

    @server.resource(f"{SCHEME}://runs", mime_type="application/json")
    def list_runs():
        """List run directories (those holding a manifest.json)."""
        return TextResource(
            uri=AnyUrl.build(scheme=SCHEME, host="runs"),
            name="runs",
            text=json.dumps(runs.list_runs()),
            description="Evaluation runs",
            mime_type="application/json",
        )

    @server.resource(f"{SCHEME}://runs/{{run_name}}", mime_type="application/json")
    def list_run_artifacts(run_name: str):
        """List the artifacts of one run."""
        if run_name not in runs.list_runs():
            raise _not_found(f"run '{run_name}'")
        return TextResource(
            uri=AnyUrl.build(scheme=SCHEME, host="runs", path=f"/{run_name}"),
            name=f"{run_name}-artifacts",
            text=json.dumps(runs.list_resources(run_name)),
            description=f"Artifacts of run {run_name}",
            mime_type="application/json",
        )

    @server.resource(f"{SCHEME}://runs/{{run_name}}/{{artifact}}")
    def get_run_artifact(run_name: str, artifact: str):
        """Get one artifact file of a run."""
        # Check existence under a known run before reading
        path = f"{run_name}/{artifact}"
        if run_name not in runs.list_runs() or not runs.resource_exists(path):
            raise _not_found(f"'{path}'")
        try:
            content = runs.get_resource_content(path)
        except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
            raise _not_found(f"'{path}'") from e
        return TextResource(
            uri=AnyUrl.build(scheme=SCHEME, host="runs", path=f"/{path}"),
            name=artifact,
            text=content,
            description=f"Run artifact: {path}",
            mime_type=_mime_type(artifact),
        )

    @server.resource(f"{SCHEME}://runs/{{run_name}}/reports/{{artifact}}")
    def get_report(run_name: str, artifact: str):
        """Get one report table (JSON or CSV) of a run."""
        path = f"{run_name}/reports/{artifact}"
        if run_name not in runs.list_runs() or not runs.resource_exists(path):
            raise _not_found(f"'{path}'")
        try:
            content = runs.get_resource_content(path)
        except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
            raise _not_found(f"'{path}'") from e
        return TextResource(
            uri=AnyUrl.build(scheme=SCHEME, host="runs", path=f"/{path}"),
            name=artifact,
            text=content,
            description=f"Report table: {path}",
            mime_type=_mime_type(artifact),
        )

    return server


def initialize_default_server() -> None:
    """Initialize the default MCP server with resources."""
    global mcp
    default_server = create_server()
    mcp.__dict__.update(default_server.__dict__)


def main():
    """Run the MCP server."""
    # Set up environment and logging
    load_dotenv()
    logging.basicConfig(level=logging.INFO)
    initialize_default_server()
    logger.info("Serving runs under %s", os.getenv(RUNS_ROOT_ENV, "runs"))
    mcp.run()


if __name__ == "__main__":
    main()

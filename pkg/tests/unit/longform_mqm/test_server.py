"""Unit tests for the run artifact MCP server."""

from unittest.mock import MagicMock, patch

from fastmcp import FastMCP

from longform_mqm.resources import RunArtifactProvider
from longform_mqm.server import _mime_type, create_server, main


def test_main_runs_server():
    """main() initializes the default server and calls run()."""
    mock_mcp = MagicMock(spec=FastMCP)
    mock_mcp.run = MagicMock()

    with patch("longform_mqm.server.mcp", mock_mcp), patch(
        "longform_mqm.server.initialize_default_server"
    ) as mock_init:
        main()

    mock_init.assert_called_once()
    mock_mcp.run.assert_called_once()


def test_create_server_returns_fastmcp(tmp_path):
    server = create_server(RunArtifactProvider(tmp_path))
    assert isinstance(server, FastMCP)


def test_default_provider_reads_environment(tmp_path, monkeypatch, mocker):
    monkeypatch.setenv("LONGFORM_MQM_RUNS", str(tmp_path))
    provider_cls = mocker.patch("longform_mqm.server.RunArtifactProvider")
    create_server()
    provider_cls.assert_called_once_with(str(tmp_path))


def test_mime_types():
    assert _mime_type("manifest.json") == "application/json"
    assert _mime_type("results.jsonl") == "application/jsonl"
    assert _mime_type("span_counts.csv") == "text/csv"
    assert _mime_type("notes") == "text/plain"

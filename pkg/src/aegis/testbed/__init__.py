"""Offline stand-ins for the proceedings sites, the agent and the nomination form."""

from .server import ManifestInvalid, PortInUse, Testbed, serve_fixtures

__all__ = ["ManifestInvalid", "PortInUse", "Testbed", "serve_fixtures", "default_corpus_dir"]


def default_corpus_dir():
    from ..pipeline import bundled

    return bundled("corpus")

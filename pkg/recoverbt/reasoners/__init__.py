from pathlib import Path

from recoverbt.config import ConfigException, EndpointConfig, load_endpoint_config
from recoverbt.reasoners.base import CountingReasoner, Reasoner, ReasonerException, ReasonerInput
from recoverbt.reasoners.oracle import OracleReasoner
from recoverbt.reasoners.vlm import FixtureTransport, OpenAITransport, VLMReasoner
from recoverbt.simulator import World

REASONERS = ("oracle", "vlm")


def make_reasoner_factory(name: str, endpoint: EndpointConfig | Path | str | None = None):
    """Build the per-run reasoner constructor the pipeline expects.

    Args:
        name (str): oracle or vlm.
        endpoint (EndpointConfig | Path | str, optional): Endpoint config or its file; required
            for vlm.

    Raises:
        ConfigException: On an unknown reasoner name or a vlm reasoner without endpoint config.
    """
    match name:
        case "oracle":
            return OracleReasoner
        case "vlm":
            if endpoint is None:
                raise ConfigException("The vlm reasoner requires an endpoint config")
            config = endpoint if isinstance(endpoint, EndpointConfig) else load_endpoint_config(endpoint)

            def factory(world: World) -> Reasoner:
                return VLMReasoner(config)

            return factory
    raise ConfigException("Unknown reasoner %r (expected one of %s)" % (name, ", ".join(REASONERS)))


__all__ = [
    "REASONERS",
    "CountingReasoner",
    "FixtureTransport",
    "OpenAITransport",
    "OracleReasoner",
    "Reasoner",
    "ReasonerException",
    "ReasonerInput",
    "VLMReasoner",
    "make_reasoner_factory",
]

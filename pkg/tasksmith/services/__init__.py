from .config_service import ConfigService, RunConfig, get_config_service, parse_config, validate_stream
from .prompt_engine_service import PromptEngineService, instantiate_prompt, sample_assignment

__all__ = [
    "ConfigService",
    "PromptEngineService",
    "RunConfig",
    "get_config_service",
    "instantiate_prompt",
    "parse_config",
    "sample_assignment",
    "validate_stream",
]

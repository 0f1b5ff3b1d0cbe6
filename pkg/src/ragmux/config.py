"""Pipeline configuration: YAML file loading, flag overrides, digests.

Schema (every leaf has a CLI flag mirror; all keys optional):

    profile: l1 | l2 | l3 | l4
    judge: lexical | llm
    mock_llm: true | false
    corpus_dir: path
    index_dir: path
    fusion:
      rrf_k: int
      space_weights: {semantic: w, lexical: w, structural: w, metadata: w}
    reflection:
      max_iters: int
      coverage_threshold: float
      k_growth: int
    chunking:
      max_tokens_per_chunk: int
      table_as_single_chunk: bool
      attach_caption_to_figure: bool
    embedder:
      kind: mock | remote
      dim: int
      model_name: str
    gateway:
      base_url: str
      api_key_env_var: str
      model_name: str
      timeout_ms: int
      max_retries: int
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .chunking import ChunkingPolicy
from .gateway import ProviderConfig
from .planning import LevelProfile, ReflectionConfig
from .retrieval import FusionConfig, SpaceKind
from .spaces import EmbedderSpec


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    profile: LevelProfile = LevelProfile.L4
    fusion: FusionConfig = field(default_factory=FusionConfig)
    reflection: ReflectionConfig = field(default_factory=ReflectionConfig)
    chunking: ChunkingPolicy = field(default_factory=ChunkingPolicy)
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    gateway: ProviderConfig | None = None
    mock_llm: bool = True
    judge: str = "lexical"
    corpus_dir: str | None = None
    index_dir: str | None = None

    def as_dict(self) -> dict:
        return {
            "profile": self.profile.value,
            "fusion": {
                "rrf_k": self.fusion.rrf_k,
                "space_weights": {k.value: w for k, w in sorted(self.fusion.space_weights.items())},
            },
            "reflection": {
                "max_iters": self.reflection.max_iters,
                "coverage_threshold": self.reflection.coverage_threshold,
                "k_growth": self.reflection.k_growth,
            },
            "chunking": {
                "max_tokens_per_chunk": self.chunking.max_tokens_per_chunk,
                "table_as_single_chunk": self.chunking.table_as_single_chunk,
                "attach_caption_to_figure": self.chunking.attach_caption_to_figure,
            },
            "embedder": {
                "kind": self.embedder.kind,
                "dim": self.embedder.dim,
                "model_name": self.embedder.model_name,
            },
            # Secrets never serialize: only the env var *name* is config.
            "gateway": None
            if self.gateway is None
            else {
                "base_url": self.gateway.base_url,
                "api_key_env_var": self.gateway.api_key_env_var,
                "model_name": self.gateway.model_name,
                "timeout_ms": self.gateway.timeout_ms,
                "max_retries": self.gateway.max_retries,
            },
            "mock_llm": self.mock_llm,
            "judge": self.judge,
            "corpus_dir": self.corpus_dir,
            "index_dir": self.index_dir,
        }

    def digest(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _section(data: dict, key: str) -> dict:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {key!r} must be a mapping")
    return value


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Build the effective config: defaults <- file <- non-None overrides."""
    data: dict = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping")
        data = loaded
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    try:
        fusion_data = _section(data, "fusion")
        weights = {
            SpaceKind(name): float(w)
            for name, w in (fusion_data.get("space_weights") or {}).items()
        }
        fusion = FusionConfig(rrf_k=fusion_data.get("rrf_k", 60), space_weights=weights)

        reflection_data = _section(data, "reflection")
        reflection = ReflectionConfig(
            max_iters=reflection_data.get("max_iters", 3),
            coverage_threshold=reflection_data.get("coverage_threshold", 0.6),
            k_growth=reflection_data.get("k_growth", 2),
        )

        chunking_data = _section(data, "chunking")
        chunking = ChunkingPolicy(
            max_tokens_per_chunk=chunking_data.get("max_tokens_per_chunk", 256),
            table_as_single_chunk=chunking_data.get("table_as_single_chunk", True),
            attach_caption_to_figure=chunking_data.get("attach_caption_to_figure", True),
        )

        embedder_data = _section(data, "embedder")
        embedder = EmbedderSpec(
            kind=embedder_data.get("kind", "mock"),
            dim=embedder_data.get("dim", 256),
            model_name=embedder_data.get("model_name"),
        )

        gateway_data = _section(data, "gateway")
        gateway = None
        if gateway_data:
            gateway = ProviderConfig(
                base_url=gateway_data["base_url"],
                api_key_env_var=gateway_data.get("api_key_env_var", "RAGMUX_API_KEY"),
                model_name=gateway_data["model_name"],
                timeout_ms=gateway_data.get("timeout_ms", 30_000),
                max_retries=gateway_data.get("max_retries", 2),
            )

        profile_raw = data.get("profile", "l4")
        profile = LevelProfile(str(profile_raw).lower())

        judge = data.get("judge", "lexical")
        if judge not in ("lexical", "llm"):
            raise ConfigError(f"judge must be 'lexical' or 'llm', got {judge!r}")

        return PipelineConfig(
            profile=profile,
            fusion=fusion,
            reflection=reflection,
            chunking=chunking,
            embedder=embedder,
            gateway=gateway,
            mock_llm=bool(data.get("mock_llm", True)),
            judge=judge,
            corpus_dir=data.get("corpus_dir"),
            index_dir=data.get("index_dir"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc

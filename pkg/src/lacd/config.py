"""Application configuration and artifact wiring.

One JSON file drives the CLI and the service.  Every section is optional
and falls back to defaults, but unknown keys anywhere are rejected so a
typo cannot silently disable what it meant to set.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backends import (
    REMOTE_KEY_ENV,
    CachedCaseProvider,
    CachedEmbedBackend,
    CaseProvider,
    EmbedBackend,
    HashCrossBackend,
    HashingEmbedBackend,
    ProviderCache,
    RemoteCaseProvider,
    RemoteEmbedBackend,
    StubCaseProvider,
)
from .camgraph import CamGraph
from .gnn import GnnKind, GnnNetwork
from .numerics import ContractError
from .retriever import (
    MODE_CAM,
    BiEncoder,
    ProbCalc,
    RetrieverConfig,
    RetrieverModels,
    load_params,
)
from .trainer import TrainConfig


@dataclass
class PathsConfig:
    corpus: Optional[str] = None
    graph: Optional[str] = None
    index: Optional[str] = None
    models: Optional[str] = None  # directory holding bi.ckpt / cross.ckpt
    cache: Optional[str] = None
    labels: Optional[str] = None
    gold: Optional[str] = None


@dataclass
class BackendsConfig:
    embed: str = "hash"  # hash | remote
    case: str = "stub"  # stub | remote
    dim: int = 256
    seed: int = 0
    remote_url: Optional[str] = None
    remote_case_model: str = "default"
    remote_embed_model: str = "embed"

    def __post_init__(self):
        if self.embed not in ("hash", "remote"):
            raise ContractError(f"unknown embed backend {self.embed!r}")
        if self.case not in ("stub", "remote"):
            raise ContractError(f"unknown case backend {self.case!r}")
        if self.dim < 1:
            raise ContractError("embedding dim must be positive")


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8321

    def __post_init__(self):
        if not (0 < self.port < 65536):
            raise ContractError(f"port {self.port} out of range")


@dataclass
class AppConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    backends: BackendsConfig = field(default_factory=BackendsConfig)
    retriever: RetrieverConfig = field(default_factory=RetrieverConfig)
    train_bi: TrainConfig = field(default_factory=TrainConfig.bi_defaults)
    train_cross: TrainConfig = field(default_factory=TrainConfig.cross_defaults)
    service: ServiceConfig = field(default_factory=ServiceConfig)


_SECTION_TYPES = {
    "paths": PathsConfig,
    "backends": BackendsConfig,
    "service": ServiceConfig,
}


def _build_section(cls, data: dict, context: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ContractError(f"unknown key {sorted(unknown)[0]!r} in {context}")
    return cls(**data)


def _build_retriever(data: dict) -> RetrieverConfig:
    allowed = {"step1", "step3", "k", "theta", "gnn_kind"}
    unknown = set(data) - allowed
    if unknown:
        raise ContractError(f"unknown key {sorted(unknown)[0]!r} in retriever")
    kwargs = dict(data)
    if "gnn_kind" in kwargs:
        try:
            kwargs["gnn_kind"] = GnnKind(kwargs["gnn_kind"])
        except ValueError:
            raise ContractError(f"unknown gnn_kind {kwargs['gnn_kind']!r}") from None
    return RetrieverConfig(**kwargs)


def _build_train(data: dict, defaults: TrainConfig, context: str) -> TrainConfig:
    allowed = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(data) - allowed
    if unknown:
        raise ContractError(f"unknown key {sorted(unknown)[0]!r} in {context}")
    kwargs = dataclasses.asdict(defaults)
    kwargs.update(data)
    if isinstance(kwargs.get("seeds"), list):
        kwargs["seeds"] = tuple(kwargs["seeds"])
    return TrainConfig(**kwargs)


def config_from_dict(data: dict) -> AppConfig:
    known = {"paths", "backends", "retriever", "train_bi", "train_cross", "service"}
    unknown = set(data) - known
    if unknown:
        raise ContractError(f"unknown top-level config key {sorted(unknown)[0]!r}")
    cfg = AppConfig()
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            if not isinstance(data[name], dict):
                raise ContractError(f"config section {name!r} must be an object")
            setattr(cfg, name, _build_section(cls, data[name], name))
    if "retriever" in data:
        cfg.retriever = _build_retriever(data["retriever"])
    if "train_bi" in data:
        cfg.train_bi = _build_train(data["train_bi"], TrainConfig.bi_defaults(), "train_bi")
    if "train_cross" in data:
        cfg.train_cross = _build_train(data["train_cross"], TrainConfig.cross_defaults(), "train_cross")
    return cfg


def load_config(path) -> AppConfig:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise ContractError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ContractError("config root must be a JSON object")
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Factories from config


def build_embedder(cfg: BackendsConfig, cache: Optional[ProviderCache] = None) -> EmbedBackend:
    if cfg.embed == "hash":
        backend: EmbedBackend = HashingEmbedBackend(dim=cfg.dim, seed=cfg.seed)
    else:
        if not cfg.remote_url:
            raise ContractError("remote embed backend needs backends.remote_url")
        backend = RemoteEmbedBackend(cfg.remote_url, cfg.dim, model=cfg.remote_embed_model)
    if cache is not None:
        backend = CachedEmbedBackend(backend, cache)
    return backend


def build_case_provider(cfg: BackendsConfig, cache: Optional[ProviderCache] = None) -> CaseProvider:
    if cfg.case == "stub":
        provider: CaseProvider = StubCaseProvider()
    else:
        if not cfg.remote_url:
            raise ContractError("remote case provider needs backends.remote_url")
        if not os.environ.get(REMOTE_KEY_ENV):
            raise ContractError(f"remote case provider needs {REMOTE_KEY_ENV} set")
        provider = RemoteCaseProvider(cfg.remote_url, model=cfg.remote_case_model)
    if cache is not None:
        provider = CachedCaseProvider(provider, cache)
    return provider


def open_cache(cfg: AppConfig) -> Optional[ProviderCache]:
    if cfg.paths.cache is None:
        return None
    return ProviderCache(cfg.paths.cache)


BI_CKPT = "bi.ckpt"
CROSS_CKPT = "cross.ckpt"


def load_models(cfg: AppConfig, graph: CamGraph) -> RetrieverModels:
    """Model bundle for the configured pipeline.

    Checkpoints under paths.models are loaded when present; otherwise the
    bundle starts at the untrained state (identity projection, zero scorer),
    which scores every pair 0.5.
    """
    cache = open_cache(cfg)
    backend = build_embedder(cfg.backends, cache)
    bi = BiEncoder.create(backend, mode=cfg.retriever.step1)
    cross = HashCrossBackend(backend)
    gnn = None
    if cfg.retriever.step3 == MODE_CAM:
        gnn = GnnNetwork(cfg.retriever.gnn_kind, backend.dim, seed=0)
    d_cat = cross.dim_c + (2 * gnn.d_out if gnn is not None else 0)
    probcalc = ProbCalc.create(d_cat)
    models = RetrieverModels(bi, cross, probcalc, gnn)

    if cfg.paths.models:
        root = Path(cfg.paths.models)
        bi_path = root / BI_CKPT
        cross_path = root / CROSS_CKPT
        if bi_path.exists():
            load_params([bi.projection], bi_path)
        if cross_path.exists():
            params = probcalc.params() + (gnn.params() if gnn is not None else [])
            load_params(params, cross_path)
    return models

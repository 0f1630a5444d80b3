"""
Settings loader for the CityOps platform.

Reads config/settings.yaml, applies .env / environment overrides and returns a
typed Settings tree. Every path is resolved against the repository root so the
CLI behaves the same from any working directory.
"""
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

DEFAULT_SETTINGS_PATH = Path(__file__).resolve().parent.parent / "config" / "settings.yaml"

ENV_SECRET = "CITYOPS_SIGNING_SECRET"
ENV_DATA_DIR = "CITYOPS_DATA_DIR"
ENV_LOG_LEVEL = "CITYOPS_LOG_LEVEL"


class ConfigError(Exception):
    """Raised when the configuration is incomplete or points at missing files."""


@dataclass
class MonitorSettings:
    host: str = "127.0.0.1"
    port: int = 8080
    default_mni: int = 120
    retry_count: int = 3
    retry_backoff: List[float] = field(default_factory=lambda: [1.0, 2.0, 4.0])
    ack_timeout: float = 5.0
    dead_letter_file: str = "monitor/dead_letters.jsonl"
    snapshot_every: int = 500
    admin_origin: str = "admin:admin"


@dataclass
class LakeSettings:
    host: str = "127.0.0.1"
    port: int = 8081
    allowlist: List[str] = field(default_factory=lambda: ["127.0.0.1", "testclient"])
    verticals: List[str] = field(default_factory=lambda: ["AQ", "WM", "EM", "WE", "SR", "AQM", "SL", "EV"])
    subscription_name: str = "SUB-LAKE"


@dataclass
class ExchangeSettings:
    host: str = "127.0.0.1"
    port: int = 8082
    server_id: str = "iudx-rs-onem2m.iiit.ac.in"
    issuer: str = "authvertx.iudx.org.in"
    signing_secret: str = ""
    algorithm: str = "HS256"
    token_ttl: int = 3600
    page_size: int = 2000
    max_span_days: int = 10
    utc_offset: str = "+05:30"
    gzip: bool = False
    revocation_key: str = ""


@dataclass
class QualitySettings:
    source: str = "lake"
    histogram_bin: float = 5.0
    triples_export: Optional[str] = None
    utc_offset: str = "+05:30"


@dataclass
class Settings:
    base_dir: Path
    data_dir: Path
    log_dir: Path
    log_level: str
    seed: int
    campus: Path
    knowledge_base: Path
    quality_factors: Path
    profiles: Path
    tariffs: Path
    workflows: Path
    monitor: MonitorSettings
    lake: LakeSettings
    exchange: ExchangeSettings
    quality: QualitySettings

    def data_path(self, *parts: str) -> Path:
        """Path under the data directory, creating the parent directory."""
        path = self.data_dir.joinpath(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path


def _section(raw: Dict[str, Any], name: str, cls):
    values = raw.get(name) or {}
    if not isinstance(values, dict):
        raise ConfigError(f"Section '{name}' must be a mapping")
    known = {k: v for k, v in values.items() if k in cls.__dataclass_fields__}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"Unknown keys in section '{name}': {unknown}")
    return cls(**known)


def _resolve(base_dir: Path, value: Optional[str], key: str, must_exist: bool = True) -> Path:
    if not value:
        raise ConfigError(f"Missing required path '{key}'")
    path = Path(value)
    if not path.is_absolute():
        path = base_dir / path
    if must_exist and not path.exists():
        raise ConfigError(f"Path for '{key}' does not resolve: {path}")
    return path


def _load_secret(base_dir: Path, exchange_raw: Dict[str, Any], inline: str) -> str:
    if os.getenv(ENV_SECRET):
        return os.environ[ENV_SECRET]

    secret_file = exchange_raw.get("signing_secret_file")
    if secret_file:
        path = _resolve(base_dir, secret_file, "exchange.signing_secret_file", must_exist=False)
        if not path.exists():
            raise ConfigError(f"Signing secret file not found: {path}")
        secret = path.read_text().strip()
        if not secret:
            raise ConfigError(f"Signing secret file is empty: {path}")
        return secret

    if not inline:
        raise ConfigError("No signing secret configured (exchange.signing_secret or CITYOPS_SIGNING_SECRET)")
    return inline


def load_settings(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> Settings:
    """
    Load settings from YAML with environment overrides.

    Args:
        path: settings.yaml location, defaults to config/settings.yaml
        overrides: optional top-level values (data_dir, log_level, seed) from CLI flags

    Returns:
        Settings: fully resolved settings

    Raises:
        ConfigError: if the file is missing, malformed or references missing paths
    """
    load_dotenv()
    settings_path = Path(path) if path else DEFAULT_SETTINGS_PATH
    if not settings_path.exists():
        raise ConfigError(f"Settings file not found: {settings_path}")

    try:
        with open(settings_path, 'r') as f:
            raw = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Settings file is not valid YAML: {e}") from e

    overrides = overrides or {}
    base_dir = settings_path.resolve().parent.parent
    runtime = raw.get("runtime") or {}
    paths = raw.get("paths") or {}

    exchange_raw = dict(raw.get("exchange") or {})
    exchange_raw.pop("signing_secret_file", None)
    raw_for_sections = dict(raw)
    raw_for_sections["exchange"] = exchange_raw

    exchange = _section(raw_for_sections, "exchange", ExchangeSettings)
    exchange.signing_secret = _load_secret(base_dir, raw.get("exchange") or {}, exchange.signing_secret)
    if not exchange.revocation_key:
        exchange.revocation_key = exchange.signing_secret

    data_dir = overrides.get("data_dir") or os.getenv(ENV_DATA_DIR) or paths.get("data_dir", "data/store")
    log_level = overrides.get("log_level") or os.getenv(ENV_LOG_LEVEL) or runtime.get("log_level", "INFO")

    settings = Settings(
        base_dir=base_dir,
        data_dir=_resolve(base_dir, data_dir, "paths.data_dir", must_exist=False),
        log_dir=_resolve(base_dir, runtime.get("log_dir", "logs"), "runtime.log_dir", must_exist=False),
        log_level=log_level,
        seed=int(overrides.get("seed", runtime.get("seed", 42))),
        campus=_resolve(base_dir, paths.get("campus"), "paths.campus"),
        knowledge_base=_resolve(base_dir, paths.get("knowledge_base"), "paths.knowledge_base"),
        quality_factors=_resolve(base_dir, paths.get("quality_factors"), "paths.quality_factors"),
        profiles=_resolve(base_dir, paths.get("profiles"), "paths.profiles"),
        tariffs=_resolve(base_dir, paths.get("tariffs"), "paths.tariffs"),
        workflows=_resolve(base_dir, paths.get("workflows", "config/workflows.yaml"), "paths.workflows"),
        monitor=_section(raw, "monitor", MonitorSettings),
        lake=_section(raw, "lake", LakeSettings),
        exchange=exchange,
        quality=_section(raw, "quality", QualitySettings),
    )
    settings.data_dir.mkdir(parents=True, exist_ok=True)
    return settings


def load_yaml(path: Path) -> Dict[str, Any]:
    """Read one of the auxiliary YAML files (campus, profiles, tariffs, ...)."""
    try:
        with open(path, 'r') as f:
            return yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e

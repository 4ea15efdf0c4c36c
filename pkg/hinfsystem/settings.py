from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

class NyquistSettings(BaseSettings):
    safety_factor: float = Field(default=2.0)
    probes: int = Field(default=9)
    variation: float = Field(default=4.0)
    max_depth: int = Field(default=4)
    seed_nodes: int = Field(default=64)
    budget: int = Field(default=1_000_000)
    beta: float = Field(default=1.0)
    cutoff_factor: float = Field(default=4.0)
    cutoff_floor: float = Field(default=10.0)
    cutoff_doublings: int = Field(default=10)
    tail_alpha: float = Field(default=1e-2)
    tail_max: float = Field(default=1e6)
    origin_tolerance: float = Field(default=1e-14)
    ray_tolerance: float = Field(default=1e-12)
    seed: int = Field(default=0)
    model_config = SettingsConfigDict(env_prefix='NYQUIST_')

class NormSettings(BaseSettings):
    theta: float = Field(default=1e-2)
    active_threshold: float = Field(default=1e-3)
    gap_tolerance: float = Field(default=1e-9)
    default_cutoff: float = Field(default=1e3)
    tail_doublings: int = Field(default=20)
    gradient_nodes: int = Field(default=256)
    growth_levels: int = Field(default=12)
    growth_factor: float = Field(default=1e2)
    model_config = SettingsConfigDict(env_prefix='NORM_')

class SynthesisSettings(BaseSettings):
    bundle_capacity: int = Field(default=50)
    ratio_low: float = Field(default=0.1)
    ratio_high: float = Field(default=0.7)
    shrink: float = Field(default=0.5)
    expand: float = Field(default=2.0)
    radius: float = Field(default=0.5)
    max_backtracks: int = Field(default=30)
    max_iterations: int = Field(default=60)
    step_tolerance: float = Field(default=1e-6)
    penalty: float = Field(default=1e3)
    model_config = SettingsConfigDict(env_prefix='SYNTH_')

class SimulationSettings(BaseSettings):
    parabolic_nodes: int = Field(default=200)
    parabolic_step: float = Field(default=1e-2)
    wave_nodes: int = Field(default=100)
    horizon: float = Field(default=10.0)
    model_config = SettingsConfigDict(env_prefix='SIMULATION_')

class OutputSettings(BaseSettings):
    directory: str = Field(default='out')
    weights: str = Field(default='data/weights')
    model_config = SettingsConfigDict(env_prefix='OUTPUT_')

class Settings(BaseSettings):
    nyquist: NyquistSettings = Field(default_factory=NyquistSettings)
    norms: NormSettings = Field(default_factory=NormSettings)
    synthesis: SynthesisSettings = Field(default_factory=SynthesisSettings)
    simulation: SimulationSettings = Field(default_factory=SimulationSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

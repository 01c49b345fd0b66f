from .plant import PlantConfig, PlantState, Trajectory, settle, simulate
from .signals import SignalSpec, generate

__all__ = ['PlantConfig', 'PlantState', 'Trajectory', 'settle', 'simulate', 'SignalSpec', 'generate']

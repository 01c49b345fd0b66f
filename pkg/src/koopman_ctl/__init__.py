from .hdmd import KoopmanSpectrum, LiftedModel, fit, spectrum
from .observables import LiftedSnapshotSet, ObservableDictionary, lift
from .reduce import ReducedModel, project, select_modes
from .control import LQRDesign, design, plan_open_loop

__all__ = ['KoopmanSpectrum', 'LiftedModel', 'fit', 'spectrum',
           'LiftedSnapshotSet', 'ObservableDictionary', 'lift',
           'ReducedModel', 'project', 'select_modes',
           'LQRDesign', 'design', 'plan_open_loop']

"""Isochromat MR simulator with reversible transverse relaxation (T2').

A sub-voxel Lorentzian frequency spread is carried as a frequency
derivative next to each magnetization vector, so one isochromat stands in
for the whole distribution.
"""
from .analytic import FreeSegment, bz_integral, propagate_free
from .engine import (SimOptions, TimingReport, benchmark, run, run_cpmg_demo)
from .errors import IntegrityError, LayoutError, SequenceError, SimulationError
from .kernel import GAMMA_BAR, FieldStep, rot3, split_rotation, step_m4, step_m7
from .model import (Isochromat, IsochromatSet, Phantom, TissueParams, load_phantom,
                    make_circles_phantom, sample_lorentzian_offsets, save_phantom,
                    split_subvoxels)
from .sampling import AdcStream, CoilSensitivity, accumulate, phase_slope, sample_continuous, \
    sample_discrete
from .seqio import (Adc, FreeBlock, IdealPulse, RFBlock, Sequence, builtin_sequences,
                    dedup_blocks, load_sequence, make_sinc_rf, parse_sequence, save_sequence,
                    segment)
from .transitions import apply, build_combined

__version__ = "0.1.0"

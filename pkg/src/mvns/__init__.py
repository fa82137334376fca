"""Implicit-Euler Navier-Stokes on the torus as a multivalued dynamical system."""
from .spectral import (SpectralSpace, SpectralVelocity, ForcingField, NormTriple, space,
                       leray_project, stokes_apply, nonlinear_term, inner, trilinear, norms,
                       h_distance, single_mode, shear_mode, random_velocity)
from .euler import (StepConfig, NewtonOptions, SolutionSet, Trajectory, NoSolutionError,
                    step_solve, step_residual, energy_identity_residual, iterate)
from .dissipativity import (CalibratedConstants, CalibrationPlan, CalibrationError,
                            calibrate_dissipativity, check_v_absorbing, uniqueness_threshold)
from .mvds import (BoxCollection, PointCloud, SetValuedMap, image_of_boxes, positive_orbit,
                   omega_limit, is_positively_invariant, hausdorff_semidist, covering_diameter,
                   semigroup_property_check)
from .attractor import (AttractorSample, InterpolantPair, SamplingPlan, reference_semigroup,
                        sample_attractor, attractor_distance, interpolant_residual,
                        trajectory_error, convergence_order, h2_hypothesis_check)

__version__ = "0.1.0"

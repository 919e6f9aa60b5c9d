"""Two-hand dexterous grasp synthesis.

Library layout:

- :mod:`dualgrasp.geometry`    -- meshes, signed distance, sampling, hulls, fixtures
- :mod:`dualgrasp.hand`        -- hand description, kinematics, grasp state
- :mod:`dualgrasp.energy`      -- the seven-term grasp energy and its gradient
- :mod:`dualgrasp.initializer` -- antipodal convex-hull initialization
- :mod:`dualgrasp.optimizer`   -- Metropolis-adjusted Langevin optimization
- :mod:`dualgrasp.verifier`    -- quasi-static wrench-feasibility verification
- :mod:`dualgrasp.dataset`     -- grasp records, JSON Lines persistence, statistics
- :mod:`dualgrasp.diffusion`   -- conditional denoising diffusion over grasp vectors
- :mod:`dualgrasp.cli`         -- command-line front end
"""

__version__ = "0.1.0"

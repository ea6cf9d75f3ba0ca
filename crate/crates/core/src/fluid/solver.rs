use glam::{DVec2, DVec3, Vec3Swizzles};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    collide_bed, collide_nozzle, BedBounds, Emitter, Kernels, MaterialParams, NeighborGrid, Nozzle, Particle,
    SimConfig, SimError,
};

/// Particles are considered in bed contact within this distance (mm).
const CONTACT_SLOP: f64 = 1e-9;

/// Complete simulator state: particles, apparatus, clock and random stream.
///
/// Evolution is a deterministic function of the seed, the configuration and
/// the sequence of nozzle poses and pressures applied between steps.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub material: MaterialParams,
    pub config: SimConfig,
    pub particles: Vec<Particle>,
    pub nozzle: Nozzle,
    pub emitter: Emitter,
    pub bed: BedBounds,
    /// Simulated time (s).
    pub time: f64,
    /// Fractional particle carried between emission calls.
    pub emission_fraction: f64,
    kernels: Kernels,
    rng: ChaCha8Rng,
    awake: Vec<bool>,
    calm: Vec<u32>,
    // per-step scratch
    grid: NeighborGrid,
    predicted: Vec<DVec3>,
    density: Vec<f64>,
    lambda: Vec<f64>,
    delta: Vec<DVec3>,
    active: Vec<u32>,
    velocity_scratch: Vec<DVec3>,
}

impl Simulation {
    pub fn new(
        material: MaterialParams,
        config: SimConfig,
        nozzle: Nozzle,
        bed: BedBounds,
        seed: u64,
    ) -> Result<Self, SimError> {
        material.validate()?;
        config.validate()?;
        if !(nozzle.tip_height > 0.0) || !(nozzle.radius > 0.0) {
            return Err(SimError::InvalidParameter("nozzle dimensions must be positive".into()));
        }
        Ok(Self {
            kernels: Kernels::new(material.smoothing),
            emitter: Emitter::inscribed(&nozzle),
            material,
            config,
            particles: Vec::new(),
            nozzle,
            bed,
            time: 0.0,
            emission_fraction: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            awake: Vec::new(),
            calm: Vec::new(),
            grid: NeighborGrid::default(),
            predicted: Vec::new(),
            density: Vec::new(),
            lambda: Vec::new(),
            delta: Vec::new(),
            active: Vec::new(),
            velocity_scratch: Vec::new(),
        })
    }

    pub fn kernels(&self) -> &Kernels {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn awake_count(&self) -> usize {
        self.awake.iter().filter(|&&a| a).count()
    }

    pub fn is_awake(&self, i: usize) -> bool {
        self.awake[i]
    }

    /// Adds a particle at rest, awake.
    pub fn add_particle(&mut self, particle: Particle) {
        self.particles.push(particle);
        self.awake.push(true);
        self.calm.push(0);
    }

    pub fn wake_all(&mut self) {
        self.awake.iter_mut().for_each(|a| *a = true);
        self.calm.iter_mut().for_each(|c| *c = 0);
    }

    /// Material generated by the emitter over `dt`: `floor(P dt + carry)`
    /// particles stratified over the orifice rectangle, all moving at
    /// `(0, 0, -2P)`. The fractional remainder is carried to the next call.
    pub fn emit(&mut self, dt: f64) -> Vec<Particle> {
        let pressure = self.emitter.pressure.max(0.0);
        if self.nozzle.lifted || pressure == 0.0 {
            return Vec::new();
        }
        let total = pressure * dt + self.emission_fraction;
        let n = total.floor();
        self.emission_fraction = total - n;
        let n = n as usize;
        if n == 0 {
            return Vec::new();
        }
        let strata = (n as f64).sqrt().ceil() as usize;
        let along = self.nozzle.travel_dir.normalize_or(DVec2::X);
        let across = along.perp();
        let ext = self.emitter.half_extent;
        let z = self.nozzle.tip_height - 1e-6;
        let v = DVec3::new(0.0, 0.0, -2.0 * pressure);
        (0..n)
            .map(|i| {
                let (cx, cy) = (i % strata, i / strata);
                let u = (cx as f64 + self.rng.random::<f64>()) / strata as f64;
                let w = (cy as f64 + self.rng.random::<f64>()) / strata as f64;
                let local = DVec2::new((2.0 * u - 1.0) * ext.x, (2.0 * w - 1.0) * ext.y);
                let xy = self.nozzle.center + along * local.x + across * local.y;
                Particle {
                    p: xy.extend(z),
                    v,
                    m: 1.0,
                }
            })
            .collect()
    }

    /// SPH density of particle `i` at the current positions, self term
    /// included.
    pub fn compute_density(&self, i: usize) -> f64 {
        let p = self.particles[i].p;
        let h2 = self.kernels.h * self.kernels.h;
        self.particles
            .iter()
            .map(|q| {
                let r2 = q.p.distance_squared(p);
                if r2 < h2 {
                    q.m * self.kernels.poly6(r2)
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Densities of all particles, via the neighbour grid.
    pub fn densities(&mut self) -> Vec<f64> {
        let positions: Vec<DVec3> = self.particles.iter().map(|p| p.p).collect();
        let all: Vec<u32> = (0..positions.len() as u32).collect();
        self.grid.build(&positions, self.kernels.h);
        self.grid.query(&positions, &all, self.kernels.h);
        let w0 = self.kernels.poly6(0.0);
        (0..positions.len())
            .map(|i| {
                let p = positions[i];
                self.particles[i].m * w0
                    + self
                        .grid
                        .neighbors(i)
                        .iter()
                        .map(|&j| self.particles[j as usize].m * self.kernels.poly6(positions[j as usize].distance_squared(p)))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Runs the density-constraint passes on the current positions, leaving
    /// velocities untouched.
    pub fn solve_incompressibility(&mut self) {
        let n = self.particles.len();
        self.predicted.clear();
        self.predicted.extend(self.particles.iter().map(|p| p.p));
        self.active.clear();
        self.active.extend(0..n as u32);
        self.grid.build(&self.predicted, self.kernels.h);
        self.grid.query(&self.predicted, &self.active, self.kernels.h);
        self.constraint_passes();
        for (p, &q) in self.particles.iter_mut().zip(&self.predicted) {
            p.p = q;
        }
    }

    /// Advances one time step of `config.dt`.
    ///
    /// Order: gravity, position prediction, emission, nozzle and bed
    /// projection, density passes, velocity update, bed friction, XSPH.
    pub fn step(&mut self) -> Result<(), SimError> {
        let dt = self.config.dt;
        let g = self.config.gravity;

        self.predicted.clear();
        for (i, p) in self.particles.iter_mut().enumerate() {
            if self.awake[i] {
                p.v.z -= g * dt;
                self.predicted.push(p.p + p.v * dt);
            } else {
                self.predicted.push(p.p);
            }
        }

        let fresh = self.emit(dt);
        if self.particles.len() + fresh.len() > self.config.particle_cap {
            return Err(SimError::ParticleBudgetExceeded {
                cap: self.config.particle_cap,
            });
        }
        for particle in fresh {
            self.predicted.push(particle.p + particle.v * dt);
            self.add_particle(particle);
        }

        self.wake_near_nozzle();
        self.active.clear();
        self.active
            .extend((0..self.particles.len() as u32).filter(|&i| self.awake[i as usize]));

        self.grid.build(&self.predicted, self.kernels.h);
        self.grid.query(&self.predicted, &self.active, self.kernels.h);
        for k in 0..self.active.len() {
            let i = self.active[k] as usize;
            self.predicted[i] = self.project(i, self.predicted[i]);
        }

        self.constraint_passes();

        let friction = self.material.bed_friction;
        let contact = self.material.radius + CONTACT_SLOP;
        for &i in &self.active {
            let i = i as usize;
            let q = &mut self.predicted[i];
            let p = self.particles[i].p;
            if friction > 0.0 && q.z <= contact {
                let keep = 1.0 - friction;
                q.x = p.x + (q.x - p.x) * keep;
                q.y = p.y + (q.y - p.y) * keep;
            }
            let particle = &mut self.particles[i];
            particle.v = (*q - particle.p) / dt;
            particle.p = *q;
        }

        self.xsph();
        self.update_sleep();
        self.time += dt;
        Ok(())
    }

    /// Advances `duration` seconds with the nozzle lifted and no emission.
    pub fn settle(&mut self, duration: f64) -> Result<(), SimError> {
        if duration <= 0.0 {
            return Ok(());
        }
        let lifted = self.nozzle.lifted;
        let pressure = self.emitter.pressure;
        self.nozzle.lifted = true;
        self.emitter.pressure = 0.0;
        let steps = (duration / self.config.dt - 1e-9).ceil() as usize;
        let mut result = Ok(());
        for _ in 0..steps {
            result = self.step();
            if result.is_err() {
                break;
            }
        }
        self.nozzle.lifted = lifted;
        self.emitter.pressure = pressure;
        result
    }

    /// Largest `|rho / rho0 - 1|` over the given particles.
    pub fn density_residual(&mut self, particles: &[usize]) -> f64 {
        let rho = self.densities();
        let rho0 = self.material.rest_density;
        particles
            .iter()
            .map(|&i| (rho[i] / rho0 - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn project(&self, i: usize, q: DVec3) -> DVec3 {
        let particle = Particle {
            p: q,
            v: self.particles[i].v,
            m: self.particles[i].m,
        };
        let particle = collide_nozzle(particle, &self.nozzle);
        collide_bed(particle, self.material.radius, &self.bed).p
    }

    /// Jacobi passes enforcing `rho_i / rho0 - 1 = 0` on the active set,
    /// using the neighbour lists already in `self.grid`.
    fn constraint_passes(&mut self) {
        let n = self.predicted.len();
        let rho0 = self.material.rest_density;
        let inv_rho0 = 1.0 / rho0;
        let eps = self.config.cfm_epsilon;
        let kernels = self.kernels;
        let w0 = kernels.poly6(0.0);
        let cohesive = self.config.cohesion;
        self.density.clear();
        self.density.resize(n, rho0);
        self.lambda.clear();
        self.lambda.resize(n, 0.0);
        self.delta.clear();
        self.delta.resize(self.active.len(), DVec3::ZERO);

        for _ in 0..self.config.solver_iters {
            for (k, &i) in self.active.iter().enumerate() {
                let i = i as usize;
                let pi = self.predicted[i];
                let mut rho = self.particles[i].m * w0;
                let mut grad_i = DVec3::ZERO;
                let mut sum_grad2 = 0.0;
                for &j in self.grid.neighbors(k) {
                    let j = j as usize;
                    let r = pi - self.predicted[j];
                    let r2 = r.length_squared();
                    let mj = self.particles[j].m;
                    rho += mj * kernels.poly6(r2);
                    let g = kernels.spiky_grad(r, r2.sqrt(), tie_break(i, j)) * (mj * inv_rho0);
                    grad_i += g;
                    sum_grad2 += g.length_squared();
                }
                sum_grad2 += grad_i.length_squared();
                self.density[i] = rho;
                let mut c = rho * inv_rho0 - 1.0;
                if !cohesive {
                    c = c.max(0.0);
                }
                self.lambda[i] = -c / (sum_grad2 + eps);
            }
            for (k, &i) in self.active.iter().enumerate() {
                let i = i as usize;
                let pi = self.predicted[i];
                let li = self.lambda[i];
                let mut dp = DVec3::ZERO;
                for &j in self.grid.neighbors(k) {
                    let j = j as usize;
                    let r = pi - self.predicted[j];
                    let dist = r.length();
                    let s = li + if self.awake[j] { self.lambda[j] } else { 0.0 };
                    dp += kernels.spiky_grad(r, dist, tie_break(i, j)) * (s * self.particles[j].m);
                }
                self.delta[k] = dp * inv_rho0;
            }
            for k in 0..self.active.len() {
                let i = self.active[k] as usize;
                let q = self.predicted[i] + self.delta[k];
                self.predicted[i] = self.project(i, q);
            }
        }
    }

    fn xsph(&mut self) {
        let c = self.material.xsph;
        if c == 0.0 {
            return;
        }
        let kernels = self.kernels;
        self.velocity_scratch.clear();
        self.velocity_scratch.extend(self.particles.iter().map(|p| p.v));
        for (k, &i) in self.active.iter().enumerate() {
            let i = i as usize;
            let pi = self.particles[i].p;
            let vi = self.velocity_scratch[i];
            let mut acc = DVec3::ZERO;
            for &j in self.grid.neighbors(k) {
                let j = j as usize;
                let w = kernels.poly6(pi.distance_squared(self.particles[j].p));
                if w > 0.0 {
                    acc += (self.velocity_scratch[j] - vi) * (self.particles[j].m / self.density[j] * w);
                }
            }
            self.particles[i].v = vi + acc * c;
        }
    }

    fn wake_near_nozzle(&mut self) {
        let Some(sleep) = self.config.sleep else {
            return;
        };
        if self.nozzle.lifted {
            return;
        }
        let r2 = sleep.wake_radius * sleep.wake_radius;
        for (i, p) in self.particles.iter().enumerate() {
            if !self.awake[i] && p.p.xy().distance_squared(self.nozzle.center) < r2 {
                self.awake[i] = true;
                self.calm[i] = 0;
            }
        }
    }

    fn update_sleep(&mut self) {
        let Some(sleep) = self.config.sleep else {
            return;
        };
        let r2 = sleep.wake_radius * sleep.wake_radius;
        let mut to_wake = Vec::new();
        for (k, &i) in self.active.iter().enumerate() {
            let i = i as usize;
            let speed = self.particles[i].v.length();
            if speed > sleep.wake_speed {
                to_wake.extend(self.grid.neighbors(k).iter().copied());
            }
            let near = !self.nozzle.lifted && self.particles[i].p.xy().distance_squared(self.nozzle.center) < r2;
            if speed < sleep.speed && !near {
                self.calm[i] += 1;
            } else {
                self.calm[i] = 0;
            }
        }
        for &i in &self.active {
            let i = i as usize;
            if self.calm[i] >= sleep.frames {
                self.awake[i] = false;
                self.particles[i].v = DVec3::ZERO;
            }
        }
        for j in to_wake {
            let j = j as usize;
            if !self.awake[j] {
                self.awake[j] = true;
                self.calm[j] = 0;
            }
        }
    }
}

/// Deterministic gradient direction for coincident particles: the pair is
/// moved apart or together along X, with the sign taken from index order.
#[inline]
fn tie_break(i: usize, j: usize) -> DVec3 {
    if i < j {
        DVec3::NEG_X
    } else {
        DVec3::X
    }
}

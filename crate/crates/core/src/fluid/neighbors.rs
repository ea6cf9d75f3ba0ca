use glam::DVec3;

/// Uniform-grid neighbour search with cell size equal to the kernel support.
///
/// Particles are bucketed with a stable counting sort, so neighbour lists
/// come out in increasing particle index and the solver's summation order is
/// deterministic.
#[derive(Debug, Default, Clone)]
pub struct NeighborGrid {
    cell: f64,
    origin: DVec3,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    sorted: Vec<u32>,
    /// CSR neighbour lists for the queried particles.
    pub offsets: Vec<u32>,
    pub indices: Vec<u32>,
}

impl NeighborGrid {
    fn cell_coords(&self, p: DVec3) -> [usize; 3] {
        let q = ((p - self.origin) / self.cell).floor();
        [
            (q.x.max(0.0) as usize).min(self.dims[0] - 1),
            (q.y.max(0.0) as usize).min(self.dims[1] - 1),
            (q.z.max(0.0) as usize).min(self.dims[2] - 1),
        ]
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Buckets all `positions` into cells of size `cell`.
    pub fn build(&mut self, positions: &[DVec3], cell: f64) {
        self.cell = cell;
        if positions.is_empty() {
            self.dims = [1, 1, 1];
            self.origin = DVec3::ZERO;
            self.cell_start.clear();
            self.cell_start.extend([0, 0]);
            self.sorted.clear();
            return;
        }
        let mut lo = DVec3::splat(f64::INFINITY);
        let mut hi = DVec3::splat(f64::NEG_INFINITY);
        for &p in positions {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        self.origin = lo;
        let span = ((hi - lo) / cell).floor() + DVec3::ONE;
        self.dims = [span.x as usize, span.y as usize, span.z as usize];
        let ncells = self.dims[0] * self.dims[1] * self.dims[2];
        self.cell_start.clear();
        self.cell_start.resize(ncells + 1, 0);
        let keys: Vec<u32> = positions
            .iter()
            .map(|&p| self.flat(self.cell_coords(p)) as u32)
            .collect();
        for &k in &keys {
            self.cell_start[k as usize + 1] += 1;
        }
        for c in 0..ncells {
            self.cell_start[c + 1] += self.cell_start[c];
        }
        let mut fill = self.cell_start.clone();
        self.sorted.clear();
        self.sorted.resize(positions.len(), 0);
        for (i, &k) in keys.iter().enumerate() {
            let slot = &mut fill[k as usize];
            self.sorted[*slot as usize] = i as u32;
            *slot += 1;
        }
    }

    /// Fills the CSR lists with every particle strictly within `radius` of each
    /// particle in `queries`, excluding the particle itself.
    pub fn query(&mut self, positions: &[DVec3], queries: &[u32], radius: f64) {
        let r2 = radius * radius;
        self.offsets.clear();
        self.indices.clear();
        self.offsets.push(0);
        if positions.is_empty() {
            return;
        }
        let mut scratch: Vec<u32> = Vec::with_capacity(64);
        for &qi in queries {
            let p = positions[qi as usize];
            let c = self.cell_coords(p);
            scratch.clear();
            let range = |v: usize, n: usize| v.saturating_sub(1)..=(v + 1).min(n - 1);
            for cz in range(c[2], self.dims[2]) {
                for cy in range(c[1], self.dims[1]) {
                    let row = (cz * self.dims[1] + cy) * self.dims[0];
                    let x0 = c[0].saturating_sub(1);
                    let x1 = (c[0] + 1).min(self.dims[0] - 1);
                    let start = self.cell_start[row + x0] as usize;
                    let end = self.cell_start[row + x1 + 1] as usize;
                    for &j in &self.sorted[start..end] {
                        if j != qi && positions[j as usize].distance_squared(p) < r2 {
                            scratch.push(j);
                        }
                    }
                }
            }
            scratch.sort_unstable();
            self.indices.extend_from_slice(&scratch);
            self.offsets.push(self.indices.len() as u32);
        }
    }

    /// Neighbours of the `k`-th queried particle.
    #[inline]
    pub fn neighbors(&self, k: usize) -> &[u32] {
        &self.indices[self.offsets[k] as usize..self.offsets[k + 1] as usize]
    }
}

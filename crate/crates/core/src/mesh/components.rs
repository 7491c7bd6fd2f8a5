use super::trimesh::{norm, sub, TriMesh};

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Component label per vertex (vertices sharing a triangle are connected)
/// and the number of components. Labels follow first appearance.
pub fn connected_components(mesh: &TriMesh) -> (Vec<usize>, usize) {
    let n = mesh.vertices.len();
    let mut uf = UnionFind::new(n);
    for t in &mesh.triangles {
        uf.union(t[0], t[1]);
        uf.union(t[1], t[2]);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut count = 0;
    for v in 0..n {
        let r = uf.find(v as u32) as usize;
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = count;
            count += 1;
        }
        labels[v] = label_of_root[r];
    }
    (labels, count)
}

/// Bounding-box diagonal of each component.
pub fn component_diagonals(mesh: &TriMesh, labels: &[usize], count: usize) -> Vec<f64> {
    let mut lo = vec![[f64::INFINITY; 3]; count];
    let mut hi = vec![[f64::NEG_INFINITY; 3]; count];
    for (v, &l) in mesh.vertices.iter().zip(labels) {
        for d in 0..3 {
            lo[l][d] = lo[l][d].min(v[d]);
            hi[l][d] = hi[l][d].max(v[d]);
        }
    }
    (0..count).map(|l| norm(sub(hi[l], lo[l]))).collect()
}

/// Delete components whose bounding-box diagonal is below `frac` times the
/// largest component's.
pub fn remove_small_components(mesh: &TriMesh, frac: f64) -> TriMesh {
    if mesh.is_empty() {
        return mesh.clone();
    }
    let (labels, count) = connected_components(mesh);
    let diag = component_diagonals(mesh, &labels, count);
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let keep_label: Vec<bool> = diag.iter().map(|&d| d >= frac * largest).collect();
    let keep: Vec<bool> = labels.iter().map(|&l| keep_label[l]).collect();
    mesh.retain_vertices(&keep)
}

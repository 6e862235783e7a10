use std::collections::BTreeSet;

/// Constrained `(node, axis)` pairs with zero prescribed displacement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirichletSet {
    dofs: BTreeSet<(u32, u8)>,
}

impl DirichletSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: u32, axis: u8) {
        assert!(axis < 3, "axis out of range");
        self.dofs.insert((node, axis));
    }

    pub fn contains(&self, node: u32, axis: u8) -> bool {
        self.dofs.contains(&(node, axis))
    }

    pub fn contains_node(&self, node: u32) -> bool {
        (0..3).any(|a| self.contains(node, a))
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u8)> + '_ {
        self.dofs.iter().copied()
    }

    pub fn to_mask(&self, n_nodes: usize) -> DofMask {
        let mut m = DofMask::none(n_nodes);
        for (n, a) in self.iter() {
            if (n as usize) < n_nodes {
                m.set(n as usize, a as usize, true);
            }
        }
        m
    }
}

impl FromIterator<(u32, u8)> for DirichletSet {
    fn from_iter<I: IntoIterator<Item = (u32, u8)>>(iter: I) -> Self {
        Self {
            dofs: iter.into_iter().collect(),
        }
    }
}

/// Per-dof constraint flags, `3 * n_nodes` long.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMask {
    flags: Vec<bool>,
}

impl DofMask {
    pub fn none(n_nodes: usize) -> Self {
        Self {
            flags: vec![false; 3 * n_nodes],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.flags.len() / 3
    }

    #[inline]
    pub fn is_masked(&self, node: usize, axis: usize) -> bool {
        self.flags[3 * node + axis]
    }

    #[inline]
    pub fn dof(&self, dof: usize) -> bool {
        self.flags[dof]
    }

    pub fn set(&mut self, node: usize, axis: usize, v: bool) {
        self.flags[3 * node + axis] = v;
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn any(&self) -> bool {
        self.flags.iter().any(|f| *f)
    }

    /// Mask of the first `n_nodes` nodes (the vertex block for the linear grid).
    pub fn prefix(&self, n_nodes: usize) -> Self {
        Self {
            flags: self.flags[..3 * n_nodes].to_vec(),
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
}

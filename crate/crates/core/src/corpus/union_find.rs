/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: u32) -> u32 {
        let mut x = x;
        while self.parent[x as usize] != x {
            let grandparent = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grandparent;
            x = grandparent;
        }
        x
    }

    pub fn union(&mut self, x: u32, y: u32) {
        let mut rx = self.find(x);
        let mut ry = self.find(y);
        if rx == ry {
            return;
        }
        if self.size[rx as usize] < self.size[ry as usize] {
            std::mem::swap(&mut rx, &mut ry);
        }
        self.parent[ry as usize] = rx;
        self.size[rx as usize] += self.size[ry as usize];
    }

    pub fn connected(&mut self, x: u32, y: u32) -> bool {
        self.find(x) == self.find(y)
    }

    /// Root of every element, fully compressed. The result is a pure lookup
    /// table, safe to share across threads.
    pub fn flatten(mut self) -> Vec<u32> {
        (0..self.parent.len() as u32).map(|x| self.find(x)).collect()
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&mut self) -> Vec<Vec<u32>> {
        let n = self.parent.len();
        let mut by_root: std::collections::BTreeMap<u32, Vec<u32>> = std::collections::BTreeMap::new();
        for x in 0..n as u32 {
            let r = self.find(x);
            by_root.entry(r).or_default().push(x);
        }
        let mut comps: Vec<Vec<u32>> = by_root.into_values().collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_and_find() {
        let mut uf = UnionFind::new(5);
        uf.union(0, 1);
        uf.union(1, 2);
        assert!(uf.connected(0, 2));
        assert!(!uf.connected(0, 3));
        assert_eq!(uf.components(), vec![vec![0, 1, 2], vec![3], vec![4]]);
    }

    #[test]
    fn flatten_agrees_with_find() {
        let mut uf = UnionFind::new(8);
        for (a, b) in [(0, 4), (4, 7), (2, 3)] {
            uf.union(a, b);
        }
        let mut uf2 = uf.clone();
        let roots = uf.flatten();
        for x in 0..8u32 {
            for y in 0..8u32 {
                assert_eq!(
                    roots[x as usize] == roots[y as usize],
                    uf2.connected(x, y)
                );
            }
        }
    }
}

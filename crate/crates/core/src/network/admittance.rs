use super::NetworkModel;
use num_complex::Complex64;

/// Sparse complex bus-admittance matrix, stored row-wise with sorted columns.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl AdmittanceMatrix {
    fn from_entries(n: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        for (i, k, y) in entries {
            let row = &mut rows[i];
            match row.last_mut() {
                Some((col, acc)) if *col == k => *acc += y,
                _ => row.push((k, y)),
            }
        }
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&k, |e| e.0) {
            Ok(p) => row[p].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.rows.len());
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, y)| y * v[k]).sum())
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&(k, y)| (y - self.get(k, i)).norm() <= tol))
    }
}

/// Nodal admittance matrix over bus positions, including bus shunts.
pub fn build_bus_admittance(net: &NetworkModel) -> AdmittanceMatrix {
    let n = net.bus_count();
    let mut entries = Vec::with_capacity(4 * net.branches().len() + n);
    for br in net.branches() {
        let f = net.position(br.from_bus).expect("validated endpoint");
        let t = net.position(br.to_bus).expect("validated endpoint");
        let tp = br.two_port();
        entries.push((f, f, tp.ff));
        entries.push((f, t, tp.ft));
        entries.push((t, f, tp.tf));
        entries.push((t, t, tp.tt));
    }
    for (p, bus) in net.buses().iter().enumerate() {
        let y = bus.shunt();
        if y != Complex64::new(0.0, 0.0) {
            entries.push((p, p, y));
        }
    }
    AdmittanceMatrix::from_entries(n, entries)
}

use crate::error::{Error, Result};

/// Largest table the doubling map will hold (entries × dimension).
const MAX_TABLE: usize = 1 << 24;

/// The doubling map `T y = 2y mod 1` with `ξ_n = f(Tⁿ y)`, `y` uniform.
///
/// `f` is tabulated on the dyadic grid of level `L` (cell midpoints), so `ξ_n`
/// is a function of the binary digits `n+1 ..= n+L` of `y`. Sampling streams
/// those digits; the state is never iterated in floating point.
#[derive(Debug, Clone)]
pub struct DoublingMap {
    level: u32,
    table: Vec<Vec<f64>>,
    holder: Option<(f64, f64)>,
}

impl DoublingMap {
    /// The `L`-digit window `(b_{n+1}, …, b_{n+L})` as a `2^L`-state chain: shift left and
    /// append a fair digit. Its values are the table entries.
    pub fn window_chain(&self) -> Result<super::MarkovChain> {
        let s = 1usize << self.level;
        if s > 64 {
            return Err(Error::Unsupported(format!("window chain needs level ≤ 6, got {}", self.level)));
        }
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|c| {
                let mut row = vec![0.0; s];
                for b in 0..2 {
                    row[((c << 1) | b) & (s - 1)] += 0.5;
                }
                row
            })
            .collect();
        super::MarkovChain::new(&rows, self.table.clone())
    }

    /// `holder = Some((H, κ))` declares `|f(x) − f(y)| ≤ H|x − y|^κ`.
    pub fn new(level: u32, table: Vec<Vec<f64>>, holder: Option<(f64, f64)>) -> Result<Self> {
        if level == 0 || level > 30 {
            return Err(Error::InvalidModel(format!("dyadic level {level} outside 1..=30")));
        }
        let cells = 1usize << level;
        if table.len() != cells {
            return Err(Error::InvalidModel(format!(
                "table has {} cells, level {level} needs {cells}",
                table.len()
            )));
        }
        let dim = table[0].len();
        if dim == 0 || table.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidModel("table rows must share a positive dimension".into()));
        }
        if cells.saturating_mul(dim) > MAX_TABLE {
            return Err(Error::Budget {
                what: "doubling-map table",
                needed: (cells * dim) as u128,
                limit: MAX_TABLE as u128,
            });
        }
        if table.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("table values must be finite".into()));
        }
        if let Some((h, k)) = holder {
            if !(h >= 0.0) || !(k > 0.0 && k <= 1.0) {
                return Err(Error::InvalidModel(format!("bad Hölder data ({h}, {k})")));
            }
        }
        let map = DoublingMap { level, table, holder };
        if let Some((h, k)) = holder {
            map.check_holder(h, k)?;
        }
        Ok(map)
    }

    /// Tabulate `f` at the midpoints of the level-`L` cells.
    pub fn from_fn<F>(level: u32, holder: Option<(f64, f64)>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        if level == 0 || level > 30 {
            return Err(Error::InvalidModel(format!("dyadic level {level} outside 1..=30")));
        }
        let cells = 1usize << level;
        let table = (0..cells)
            .map(|c| f((c as f64 + 0.5) / cells as f64))
            .collect();
        Self::new(level, table, holder)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn holder(&self) -> Option<(f64, f64)> {
        self.holder
    }

    pub fn dimension(&self) -> usize {
        self.table[0].len()
    }

    /// Scan pairs of midpoints at dyadic strides against the declared modulus.
    fn check_holder(&self, h: f64, k: f64) -> Result<()> {
        let cells = self.table.len();
        let width = 1.0 / cells as f64;
        let mut stride = 1;
        while stride < cells {
            let bound = h * (stride as f64 * width).powf(k) * (1.0 + 1e-12) + 1e-12;
            for a in 0..cells - stride {
                let d = super::norm(
                    &self.table[a]
                        .iter()
                        .zip(&self.table[a + stride])
                        .map(|(x, y)| x - y)
                        .collect::<Vec<_>>(),
                );
                if d > bound {
                    return Err(Error::InvalidModel(format!(
                        "declared Hölder bound violated between cells {a} and {}",
                        a + stride
                    )));
                }
            }
            stride *= 2;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints() {
        let d = DoublingMap::from_fn(2, None, |y| vec![y]).unwrap();
        let v: Vec<f64> = d.table().iter().map(|r| r[0]).collect();
        assert_eq!(v, vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn holder_scan() {
        assert!(DoublingMap::from_fn(6, Some((1.0, 1.0)), |y| vec![y]).is_ok());
        assert!(DoublingMap::from_fn(6, Some((0.5, 1.0)), |y| vec![y]).is_err());
        assert!(DoublingMap::from_fn(6, Some((1.0, 0.5)), |y| vec![y.sqrt()]).is_ok());
    }
}

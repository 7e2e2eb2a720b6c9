use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigendecompose, ComplexMatrix, C64, STRUCTURE_TOL};

#[derive(Clone, Debug, PartialEq)]
enum Layout {
    /// Rank-one projectors onto the computational basis, in index order.
    Computational,
    General,
}

/// Checked POVM: effects are PSD and sum to identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    effects: Vec<ComplexMatrix>,
    labels: Vec<String>,
    layout: Layout,
}

impl Povm {
    /// Projectors `|z><z|` labelled by `num_qubits`-bit strings.
    pub fn computational(num_qubits: usize) -> Self {
        let d = 1usize << num_qubits;
        let effects = (0..d)
            .map(|z| {
                let mut diag = vec![0.0; d];
                diag[z] = 1.0;
                ComplexMatrix::from_real_diagonal(&diag)
            })
            .collect();
        let labels = (0..d)
            .map(|z| format!("{z:0width$b}", width = num_qubits))
            .collect();
        Self {
            effects,
            labels,
            layout: Layout::Computational,
        }
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn effects(&self) -> &[ComplexMatrix] {
        &self.effects
    }

    pub fn effect(&self, z: usize) -> &ComplexMatrix {
        &self.effects[z]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, z: usize) -> &str {
        &self.labels[z]
    }

    /// Resolves a label: exact match first, then a decimal outcome index.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        let label = label.trim();
        self.labels
            .iter()
            .position(|l| l == label)
            .or_else(|| label.parse::<usize>().ok().filter(|&i| i < self.len()))
    }

    /// `Tr[Λ_z X]` for every outcome `z`.
    pub fn traces_against(&self, x: &ComplexMatrix) -> Vec<C64> {
        match self.layout {
            Layout::Computational => (0..self.len()).map(|z| x.get(z, z)).collect(),
            Layout::General => self.effects.iter().map(|e| e.trace_product(x)).collect(),
        }
    }

    /// `Σ_z g(z) Λ_z`.
    pub fn weighted_sum(&self, payoff: &[f64]) -> ComplexMatrix {
        match self.layout {
            Layout::Computational => ComplexMatrix::from_real_diagonal(payoff),
            Layout::General => {
                let mut acc = ComplexMatrix::zeros(self.dim());
                for (e, &g) in self.effects.iter().zip(payoff) {
                    acc = &acc + &e.scale(g);
                }
                acc
            }
        }
    }
}

/// Validates effects as a POVM. `labels` defaults to `"0".."m-1"`.
pub fn validate_povm(effects: Vec<ComplexMatrix>, labels: Option<Vec<String>>) -> Result<Povm> {
    if effects.is_empty() {
        return Err(Error::Length {
            what: "POVM effects",
            expected: 1,
            found: 0,
        });
    }
    let labels = labels.unwrap_or_else(|| (0..effects.len()).map(|z| z.to_string()).collect());
    if labels.len() != effects.len() {
        return Err(Error::Length {
            what: "POVM labels",
            expected: effects.len(),
            found: labels.len(),
        });
    }
    let d = effects[0].dim();
    let mut total = ComplexMatrix::zeros(d);
    for (e, label) in effects.iter().zip(&labels) {
        if e.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: e.dim(),
            });
        }
        let eig = hermitian_eigendecompose(e).map_err(|_| Error::PovmNotPositive {
            label: label.clone(),
            min_eig: f64::NAN,
        })?;
        if eig.min_eigenvalue() < -STRUCTURE_TOL {
            return Err(Error::PovmNotPositive {
                label: label.clone(),
                min_eig: eig.min_eigenvalue(),
            });
        }
        total = &total + e;
    }
    let deviation = total.max_abs_diff(&ComplexMatrix::identity(d));
    if deviation > STRUCTURE_TOL {
        // name the outcome with the largest diagonal contribution as the likely culprit
        let worst = effects
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.trace().re.total_cmp(&b.1.trace().re))
            .map(|(z, _)| labels[z].clone())
            .unwrap_or_default();
        return Err(Error::PovmIncomplete {
            label: worst,
            deviation,
        });
    }
    let layout = if is_computational(&effects) {
        Layout::Computational
    } else {
        Layout::General
    };
    Ok(Povm {
        effects,
        labels,
        layout,
    })
}

fn is_computational(effects: &[ComplexMatrix]) -> bool {
    let d = effects[0].dim();
    effects.len() == d
        && effects.iter().enumerate().all(|(z, e)| {
            (0..d).all(|i| {
                (0..d).all(|j| {
                    let want = if i == j && i == z { 1.0 } else { 0.0 };
                    e.get(i, j) == C64::new(want, 0.0)
                })
            })
        })
}

//! Dense potentials over ordered variable scopes, stored row-major (the last
//! scope variable varies fastest), plus the product and sum-out kernels and
//! their adjoints.

use thiserror::Error;

use crate::model::VarId;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FactorError {
    #[error("table has {found} entries but the scope implies {expected}")]
    Shape { expected: usize, found: usize },
    #[error("variable {0} appears twice in a scope")]
    DuplicateScope(VarId),
    #[error("variable {var} has cardinality {left} in one factor and {right} in the other")]
    CardinalityMismatch { var: VarId, left: usize, right: usize },
    #[error("variable {0} is not in the factor's scope")]
    NotInScope(VarId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self, FactorError> {
        assert_eq!(scope.len(), cards.len(), "one cardinality per scope variable");
        for (i, v) in scope.iter().enumerate() {
            if scope[..i].contains(v) {
                return Err(FactorError::DuplicateScope(*v));
            }
        }
        let expected: usize = cards.iter().product();
        if values.len() != expected {
            return Err(FactorError::Shape {
                expected,
                found: values.len(),
            });
        }
        Ok(Factor { scope, cards, values })
    }

    pub fn scalar(value: f64) -> Self {
        Factor {
            scope: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    /// A factor with every entry equal to `value`.
    pub fn constant(scope: Vec<VarId>, cards: Vec<usize>, value: f64) -> Result<Self, FactorError> {
        let n = cards.iter().product();
        Factor::new(scope, cards, vec![value; n])
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.scope.is_empty()
    }

    pub fn position(&self, var: VarId) -> Option<usize> {
        self.scope.iter().position(|&v| v == var)
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.scope.contains(&var)
    }

    /// Row-major strides of this factor's own layout.
    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.cards)
    }

    /// Sum of all entries.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Entry at the given per-scope states.
    pub fn get(&self, states: &[usize]) -> f64 {
        let idx = states.iter().zip(self.strides()).map(|(s, st)| s * st).sum::<usize>();
        self.values[idx]
    }
}

pub(crate) fn row_major_strides(cards: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * cards[i + 1];
    }
    strides
}

/// Visit every cell of a row-major grid with dimensions `cards`, passing the
/// linear cell index together with two offsets advanced by `sa` and `sb`.
#[inline]
fn walk2(cards: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let r = cards.len();
    if r == 0 {
        f(0, 0, 0);
        return;
    }
    if cards.contains(&0) {
        return;
    }
    let last = r - 1;
    let (n_last, la, lb) = (cards[last], sa[last], sb[last]);
    let mut counter = vec![0usize; last];
    let (mut ia, mut ib, mut i) = (0usize, 0usize, 0usize);
    loop {
        let (mut ja, mut jb) = (ia, ib);
        for k in 0..n_last {
            f(i + k, ja, jb);
            ja += la;
            jb += lb;
        }
        i += n_last;
        let mut d = last;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            counter[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if counter[d] < cards[d] {
                break;
            }
            ia -= sa[d] * cards[d];
            ib -= sb[d] * cards[d];
            counter[d] = 0;
        }
    }
}

/// Layout of a product: output scope plus each operand's strides aligned to it.
pub(crate) struct ProductLayout {
    pub scope: Vec<VarId>,
    pub cards: Vec<usize>,
    pub sa: Vec<usize>,
    pub sb: Vec<usize>,
}

pub(crate) fn product_layout(a: &Factor, b: &Factor) -> Result<ProductLayout, FactorError> {
    let mut scope = a.scope.clone();
    let mut cards = a.cards.clone();
    for (v, &cb) in b.scope.iter().zip(&b.cards) {
        match a.position(*v) {
            Some(i) if a.cards[i] != cb => {
                return Err(FactorError::CardinalityMismatch {
                    var: *v,
                    left: a.cards[i],
                    right: cb,
                })
            }
            Some(_) => {}
            None => {
                scope.push(*v);
                cards.push(cb);
            }
        }
    }
    let (a_strides, b_strides) = (a.strides(), b.strides());
    let align = |f: &Factor, strides: &[usize]| -> Vec<usize> {
        scope.iter().map(|v| f.position(*v).map_or(0, |i| strides[i])).collect()
    };
    let sa = align(a, &a_strides);
    let sb = align(b, &b_strides);
    Ok(ProductLayout { scope, cards, sa, sb })
}

/// Pointwise product over the ordered scope union (`a`'s variables first).
pub fn product(a: &Factor, b: &Factor) -> Result<Factor, FactorError> {
    product_counting_underflow(a, b).map(|(f, _)| f)
}

/// Product plus the number of entries that came out zero although both
/// operands were nonzero.
pub(crate) fn product_counting_underflow(a: &Factor, b: &Factor) -> Result<(Factor, usize), FactorError> {
    let layout = product_layout(a, b)?;
    let n: usize = layout.cards.iter().product();
    let mut out = vec![0.0; n];
    let mut underflows = 0;
    let (av, bv) = (&a.values, &b.values);
    walk2(&layout.cards, &layout.sa, &layout.sb, |i, ia, ib| {
        let (x, y) = (av[ia], bv[ib]);
        let r = x * y;
        if r == 0.0 && x != 0.0 && y != 0.0 {
            underflows += 1;
        }
        out[i] = r;
    });
    let factor = Factor {
        scope: layout.scope,
        cards: layout.cards,
        values: out,
    };
    Ok((factor, underflows))
}

/// Adjoints of `c = a * b`: accumulates into `grad_a` and `grad_b`.
pub(crate) fn product_backward(
    a: &Factor,
    b: &Factor,
    adj_c: &[f64],
    grad_a: &mut [f64],
    grad_b: &mut [f64],
) -> Result<(), FactorError> {
    let layout = product_layout(a, b)?;
    let (av, bv) = (&a.values, &b.values);
    walk2(&layout.cards, &layout.sa, &layout.sb, |i, ia, ib| {
        let g = adj_c[i];
        grad_a[ia] += g * bv[ib];
        grad_b[ib] += g * av[ia];
    });
    Ok(())
}

/// Strides mapping each cell of `a` onto the factor with `var` removed.
fn sum_out_strides(a: &Factor, pos: usize) -> (Vec<VarId>, Vec<usize>, Vec<usize>) {
    let mut scope = a.scope.clone();
    let mut cards = a.cards.clone();
    scope.remove(pos);
    cards.remove(pos);
    let out_strides = row_major_strides(&cards);
    let mut so = Vec::with_capacity(a.cards.len());
    let mut k = 0;
    for i in 0..a.cards.len() {
        if i == pos {
            so.push(0);
        } else {
            so.push(out_strides[k]);
            k += 1;
        }
    }
    (scope, cards, so)
}

/// Sum `var` out of `a`.
pub fn sum_out(a: &Factor, var: VarId) -> Result<Factor, FactorError> {
    let pos = a.position(var).ok_or(FactorError::NotInScope(var))?;
    let (scope, cards, so) = sum_out_strides(a, pos);
    let n: usize = cards.iter().product();
    let mut out = vec![0.0; n];
    let zeros = vec![0; so.len()];
    let av = &a.values;
    walk2(&a.cards, &so, &zeros, |i, io, _| {
        out[io] += av[i];
    });
    Ok(Factor {
        scope,
        cards,
        values: out,
    })
}

/// Adjoint of `c = sum_out(a, var)`: broadcasts `adj_c` back over `var`.
pub(crate) fn sum_out_backward(a: &Factor, var: VarId, adj_c: &[f64], grad_a: &mut [f64]) -> Result<(), FactorError> {
    let pos = a.position(var).ok_or(FactorError::NotInScope(var))?;
    let (_, _, so) = sum_out_strides(a, pos);
    let zeros = vec![0; so.len()];
    walk2(&a.cards, &so, &zeros, |i, io, _| {
        grad_a[i] += adj_c[io];
    });
    Ok(())
}

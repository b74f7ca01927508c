use crate::error::{Error, Result};

fn check(y: &[f64], p: &[f64]) -> Result<()> {
    if y.len() != p.len() || y.len() < 2 {
        return Err(Error::invalid(format!(
            "metrics need equal lengths >= 2 (got {} and {})",
            y.len(),
            p.len()
        )));
    }
    Ok(())
}

pub fn rmse(y: &[f64], p: &[f64]) -> Result<f64> {
    check(y, p)?;
    Ok((y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], p: &[f64]) -> Result<f64> {
    check(y, p)?;
    Ok(y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Squared Pearson correlation; an error when either vector is constant.
pub fn r2(y: &[f64], p: &[f64]) -> Result<f64> {
    check(y, p)?;
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mp = p.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(p) {
        sxy += (a - my) * (b - mp);
        sxx += (a - my) * (a - my);
        syy += (b - mp) * (b - mp);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Constant("R² undefined for a constant vector".into()));
    }
    Ok(sxy * sxy / (sxx * syy))
}

/// 1 - SS_res / SS_tot.
pub fn r2_ss(y: &[f64], p: &[f64]) -> Result<f64> {
    check(y, p)?;
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let tot: f64 = y.iter().map(|a| (a - my) * (a - my)).sum();
    if tot == 0.0 {
        return Err(Error::Constant("R² undefined for a constant target".into()));
    }
    let res: f64 = y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - res / tot)
}

//! Deterministic text emission: significant-digit decimal formatting,
//! CSV and TSV writers.
//!
//! All tabular output uses `,` separators with `.` decimals and LF line
//! endings; TSV plot data carries no header. Identical inputs produce
//! byte-identical text.

use std::io::Write;

use crate::clt::ConvergenceTable;
use crate::error::Result;
use crate::grid::ValueGrid;

/// Decimal representation with `sig` significant digits.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let exponent = v.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - exponent).clamp(0, 40) as usize;
    format!("{v:.decimals$}")
}

/// Significant digits used in every emitted table.
pub const TABLE_DIGITS: usize = 12;

/// `n,value,delta` rows with a header.
pub fn write_convergence_csv(out: &mut dyn Write, table: &ConvergenceTable) -> Result<()> {
    writeln!(out, "n,value,delta")?;
    for row in &table.rows {
        writeln!(
            out,
            "{},{},{}",
            row.n,
            fmt_sig(row.value, TABLE_DIGITS),
            fmt_sig(row.delta, TABLE_DIGITS)
        )?;
    }
    Ok(())
}

/// `n,dp,pde,abs_err` rows with a header.
pub fn write_compare_csv(
    out: &mut dyn Write,
    rows: &[(u32, f64, f64, f64)],
) -> Result<()> {
    writeln!(out, "n,dp,pde,abs_err")?;
    for (n, dp, pde, err) in rows {
        writeln!(
            out,
            "{},{},{},{}",
            n,
            fmt_sig(*dp, TABLE_DIGITS),
            fmt_sig(*pde, TABLE_DIGITS),
            fmt_sig(*err, TABLE_DIGITS)
        )?;
    }
    Ok(())
}

/// Two-column `x<TAB>u` dump of a grid, no header.
pub fn write_grid_tsv(out: &mut dyn Write, grid: &ValueGrid) -> Result<()> {
    for i in 0..grid.len() {
        writeln!(
            out,
            "{}\t{}",
            fmt_sig(grid.node(i), TABLE_DIGITS),
            fmt_sig(grid.values()[i], TABLE_DIGITS)
        )?;
    }
    Ok(())
}

/// Two-column `log10(n)<TAB>log10(err)` plot data, no header. Errors are
/// floored at 1e-16 so the logarithm stays finite.
pub fn write_loglog_tsv(out: &mut dyn Write, rows: &[(u32, f64)]) -> Result<()> {
    for (n, err) in rows {
        writeln!(
            out,
            "{}\t{}",
            fmt_sig((*n as f64).log10(), TABLE_DIGITS),
            fmt_sig(err.max(1e-16).log10(), TABLE_DIGITS)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0, 12), "0");
        assert_eq!(fmt_sig(4.0, 12), "4.00000000000");
        assert_eq!(fmt_sig(0.4, 12), "0.400000000000");
        assert_eq!(fmt_sig(-0.05, 12), "-0.0500000000000");
        assert_eq!(fmt_sig(123456.789, 6), "123457");
        assert_eq!(fmt_sig(f64::INFINITY, 12), "inf");
        assert_eq!(fmt_sig(f64::NAN, 12), "nan");
    }

    #[test]
    fn csv_shape() {
        let table = ConvergenceTable {
            rows: vec![
                crate::clt::ConvergenceRow {
                    n: 4,
                    value: 0.5,
                    delta: 0.0,
                },
                crate::clt::ConvergenceRow {
                    n: 16,
                    value: 0.25,
                    delta: 0.25,
                },
            ],
        };
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &table).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,value,delta\n"));
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
    }
}

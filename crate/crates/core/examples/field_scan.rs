//! Where does training order matter for both losses? Sign regions of
//! `<R, ∇L1>` and `<R, ∇L2>` for two rotated planar quadratics.

use mixflow::domain::HvpConfig;
use mixflow::experiments::{default_planar_pair, field_point, Region};

fn main() -> mixflow::Result<()> {
    let pair = default_planar_pair();
    let (l1, l2) = (pair[0].build()?, pair[1].build()?);
    let cfg = HvpConfig::exact();
    // Coarse text map: '+' both positive, '-' both negative, '.' mixed.
    for iy in (0..25).rev() {
        let y = -3.0 + 6.0 * iy as f64 / 24.0;
        let row: String = (0..49)
            .map(|ix| {
                let x = -3.0 + 6.0 * ix as f64 / 48.0;
                match field_point(&l1, &l2, x, y, &cfg).map(|p| p.region) {
                    Ok(Region::BothPositive) => '+',
                    Ok(Region::BothNegative) => '-',
                    Ok(_) => '.',
                    Err(_) => '?',
                }
            })
            .collect();
        println!("{row}");
    }
    Ok(())
}

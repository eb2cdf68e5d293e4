//! `check` subcommands: exact-arithmetic exponent checks, no numerics.

use clap::Subcommand;
use schatten_core::strichartz::{
    full_strichartz_exponents, parse_rational, region_membership, singular_strichartz_exponents, Membership, Point, Rational,
    RegionAbcd,
};

use crate::record::Failure;

#[derive(Subcommand, Debug)]
pub enum CheckCmd {
    /// Membership of (1/q, 1/p) in the singular-randomization region.
    Region(PointArgs),
    /// Exponent tuple for singular value randomization.
    Singular(PointArgs),
    /// Exponent tuple for full randomization.
    Full {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        q_hat: String,
    },
}

#[derive(clap::Args, Debug)]
pub struct PointArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value = "0")]
    pub sigma: String,
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub q: String,
}

fn rational(name: &str, s: &str) -> Result<Rational, Failure> {
    parse_rational(s).map_err(|e| Failure::Invalid(format!("--{name}: {e}")))
}

fn verdict(m: Membership) -> &'static str {
    match m {
        Membership::Inside => "inside",
        Membership::Boundary => "boundary",
        Membership::Outside => "outside",
        Membership::ExcludedAb => "excluded-ab",
    }
}

pub fn run(cmd: &CheckCmd) -> Result<(), Failure> {
    match cmd {
        CheckCmd::Region(a) => {
            let region = RegionAbcd::new(a.d, rational("sigma", &a.sigma)?)?;
            let pt = Point::from_exponents(rational("p", &a.p)?, rational("q", &a.q)?);
            let m = region_membership(pt, &region);
            let [ca, cb, cc, cd] = region.corners();
            println!("point {pt}: {}", verdict(m));
            println!("corners A {ca} B {cb} C {cc} D {cd}");
        }
        CheckCmd::Singular(a) => {
            let e = singular_strichartz_exponents(rational("p", &a.p)?, rational("q", &a.q)?, rational("sigma", &a.sigma)?, a.d)?;
            println!("{}", serde_json::to_string(&e).expect("serializable"));
        }
        CheckCmd::Full { point: a, q_hat } => {
            let e = full_strichartz_exponents(
                rational("p", &a.p)?,
                rational("q", &a.q)?,
                rational("q_hat", q_hat)?,
                rational("sigma", &a.sigma)?,
                a.d,
            )?;
            println!("{}", serde_json::to_string(&e).expect("serializable"));
        }
    }
    Ok(())
}

//! A config file driven through run, compare and export-curves, the same
//! path the `fst-lab` binary takes.

use fst_lab::harness::{compare, export_curves, run, ConfigMap};

const CONFIG: &str = "
# short two-moons comparison
task = two-moons
iters = 200
eval_every = 50
seeds = 0,1,2
lr = 0.2
mu = 0.99
mu_prime = 0.9
tau = 0.9
batch_mode = different
";

fn main() -> fst_lab::Result<()> {
    let out = std::env::temp_dir().join("fst-lab-example");
    let mut manifests = Vec::new();
    for variant in ["st", "fst-d", "fst-w"] {
        let mut map = ConfigMap::parse(CONFIG)?;
        map.set("variant", variant)?;
        map.set("out", out.display().to_string())?;
        let plan = map.to_plan()?;
        let manifest = run(&plan)?;
        println!("{variant}: config {}", &manifest.config_hash[..12]);
        manifests.push(plan.manifest_path());
    }
    print!("{}", compare(&manifests)?);
    let curves = out.join("curves.csv");
    let rows = export_curves(&manifests, &curves)?;
    println!("{rows} curve points in {}", curves.display());
    Ok(())
}

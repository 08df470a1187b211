use garma::criteria::{criteria_report_from, deviance};
use garma::inference::{acceptance_rate, mh_sample, McmcConfig, PriorSpec};
use garma::model::{Family, ModelSpec, ParamVector};
use garma::simulate::{simulate_series, SimConfig};
use garma::study::derive_seed;

fn main() {
    let spec = ModelSpec::new(Family::NegativeBinomial { dispersion_k: 15.0 }, 1, 1);
    let truth = ParamVector::new(vec![0.8], vec![0.5], vec![0.3]);
    let candidates = [(1usize, 1usize), (1, 2), (2, 1), (2, 2)];
    for rep in [0u64, 4, 11] {
        let sim_seed = derive_seed(20_240_002, &[0, rep, 0]);
        let series = simulate_series(&SimConfig::new(spec.clone(), truth.clone(), 1000, sim_seed)).unwrap();
        println!("rep {rep}:");
        for (c_idx, &(p, q)) in candidates.iter().enumerate() {
            let cand = spec.with_order(p, q);
            let prior = PriorSpec::default_for(&cand);
            let mut mcmc = McmcConfig::new(0).with_proposal_scale(1.0);
            mcmc.seed = derive_seed(20_240_002, &[0, rep, 2 + c_idx as u64]);
            let sample = mh_sample(&cand, &prior, &series, &mcmc).unwrap();
            let r = criteria_report_from(&cand, &series, &sample, 2).unwrap();
            // mean deviance over the common window and p_D
            let mean_dev = (r.dic + deviance_at_mean(&cand, &series, &sample)) / 2.0;
            let dmean = deviance_at_mean(&cand, &series, &sample);
            let p_d = mean_dev - dmean;
            println!("  ({p},{q}): dic {:.2} lpml {:.2} D(mean) {:.2} meanD {:.2} p_D {:.2} AP {:.3} mode_dev {:.2}",
                r.dic, r.lpml, dmean, mean_dev, p_d, acceptance_rate(&sample),
                deviance(&cand, &sample.map_estimate, &series).unwrap());
        }
    }
}

fn deviance_at_mean(spec: &ModelSpec, series: &garma::model::CountSeries, sample: &garma::inference::PosteriorSample) -> f64 {
    use garma::model::Evaluator;
    let eval = Evaluator::new(spec, series).unwrap();
    let logf = eval.per_obs_log_density(&sample.posterior_mean()).unwrap();
    let skip = 2 - spec.start_index();
    -2.0 * logf[skip..].iter().sum::<f64>()
}

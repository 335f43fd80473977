//! By-name predictor registry. Built-in reference predictors register under
//! plain names and are selected at runtime from an endpoint spec string:
//!
//! - `builtin:<name>` — a registered builder (linear, planted, constant, or
//!   anything registered by the embedding application),
//! - `exec:<command …>` — spawn a subprocess speaking the wire protocol on
//!   its standard streams (whitespace-split, no shell),
//! - `tcp:<host:port>` — dial a protocol server.

use std::collections::BTreeMap;

use super::external::{ExternalOptions, ExternalPredictor};
use super::{
    make_linear_reference, ConstantPredictor, PlantedPatchPredictor, Predictor,
    PredictorDescriptor,
};
use crate::error::{Error, Result};

/// Shape/seed parameters a builtin builder receives; external endpoints
/// declare their own shape in the handshake instead.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinOptions {
    pub num_classes: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub seed: u64,
}

impl BuiltinOptions {
    pub fn descriptor(&self, name: &str) -> PredictorDescriptor {
        PredictorDescriptor {
            name: name.to_string(),
            num_classes: self.num_classes,
            input_height: self.input_height,
            input_width: self.input_width,
            input_channels: self.input_channels,
            supports_gradient: true,
        }
    }
}

type Builder = Box<dyn Fn(&BuiltinOptions) -> Result<Box<dyn Predictor>> + Send + Sync>;

/// Default local-contrast scale for the registry's planted predictor; desk
/// images with a strong patch land in a confidently separable logit range.
const PLANTED_SHARPNESS: f64 = 12.0;

pub struct PredictorRegistry {
    builders: BTreeMap<String, Builder>,
}

impl Default for PredictorRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl PredictorRegistry {
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    /// Registry preloaded with the reference predictors.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("linear", |opts| {
            Ok(Box::new(make_linear_reference(opts.descriptor("builtin:linear"), opts.seed)?))
        });
        r.register("planted", |opts| {
            Ok(Box::new(PlantedPatchPredictor::with_grid_layout(
                opts.descriptor("builtin:planted"),
                PLANTED_SHARPNESS,
            )?))
        });
        r.register("constant", |opts| {
            Ok(Box::new(ConstantPredictor::new(
                opts.descriptor("builtin:constant"),
                vec![0.0; opts.num_classes],
            )?))
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, builder: F)
    where
        F: Fn(&BuiltinOptions) -> Result<Box<dyn Predictor>> + Send + Sync + 'static,
    {
        self.builders.insert(name.to_string(), Box::new(builder));
    }

    pub fn names(&self) -> Vec<&str> {
        self.builders.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, options: &BuiltinOptions) -> Result<Box<dyn Predictor>> {
        match self.builders.get(name) {
            Some(b) => b(options),
            None => Err(Error::invalid(format!(
                "unknown builtin predictor {name:?}; registered: {}",
                self.names().join(", ")
            ))),
        }
    }

    /// Parses an endpoint spec and produces a ready predictor.
    pub fn resolve(
        &self,
        spec: &str,
        options: &BuiltinOptions,
        external: &ExternalOptions,
    ) -> Result<Box<dyn Predictor>> {
        let (scheme, rest) = spec.split_once(':').ok_or_else(|| {
            Error::invalid(format!(
                "predictor spec {spec:?} needs a scheme: builtin:<name>, exec:<cmd>, or tcp:<addr>"
            ))
        })?;
        match scheme {
            "builtin" => self.build(rest, options),
            "exec" => {
                let argv: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if argv.is_empty() {
                    return Err(Error::invalid("exec: spec has an empty command"));
                }
                Ok(Box::new(ExternalPredictor::spawn_subprocess(&argv, external)?))
            }
            "tcp" => Ok(Box::new(ExternalPredictor::dial_tcp(rest, external)?)),
            other => Err(Error::invalid(format!(
                "unknown predictor scheme {other:?} in {spec:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;

    fn opts() -> BuiltinOptions {
        BuiltinOptions {
            num_classes: 4,
            input_height: 16,
            input_width: 16,
            input_channels: 1,
            seed: 9,
        }
    }

    #[test]
    fn builtins_resolve_by_name_with_matching_shape() {
        let r = PredictorRegistry::with_builtins();
        assert_eq!(r.names(), vec!["constant", "linear", "planted"]);
        for name in ["builtin:linear", "builtin:planted", "builtin:constant"] {
            let p = r.resolve(name, &opts(), &ExternalOptions::default()).unwrap();
            let d = p.descriptor();
            assert_eq!(d.num_classes, 4);
            assert_eq!((d.input_height, d.input_width, d.input_channels), (16, 16, 1));
            assert_eq!(d.name, name);
        }
    }

    #[test]
    fn builtin_linear_is_seed_deterministic_through_the_registry() {
        let r = PredictorRegistry::with_builtins();
        let img = Image::filled(16, 16, 1, 0.3).unwrap();
        let mut a = r.build("linear", &opts()).unwrap();
        let mut b = r.build("linear", &opts()).unwrap();
        let mut c = r.build("linear", &BuiltinOptions { seed: 10, ..opts() }).unwrap();
        assert_eq!(
            a.predict(&img, None, false).unwrap().scores,
            b.predict(&img, None, false).unwrap().scores
        );
        assert_ne!(
            a.predict(&img, None, false).unwrap().scores,
            c.predict(&img, None, false).unwrap().scores
        );
    }

    #[test]
    fn custom_strategies_can_be_registered() {
        let mut r = PredictorRegistry::empty();
        r.register("always-two", |o| {
            let mut scores = vec![0.0; o.num_classes];
            scores[2.min(o.num_classes - 1)] = 10.0;
            Ok(Box::new(ConstantPredictor::new(o.descriptor("always-two"), scores)?))
        });
        let mut p = r.resolve("builtin:always-two", &opts(), &ExternalOptions::default()).unwrap();
        let img = Image::filled(16, 16, 1, 0.5).unwrap();
        let out = p.predict(&img, None, false).unwrap();
        let argmax = out
            .probabilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 2);
    }

    #[test]
    fn bad_specs_are_rejected_with_guidance() {
        let r = PredictorRegistry::with_builtins();
        let ext = ExternalOptions::default();
        let err = r.resolve("builtin:nope", &opts(), &ext).err().unwrap();
        assert!(err.to_string().contains("linear"), "should list known names: {err}");
        assert!(r.resolve("no-scheme", &opts(), &ext).is_err());
        assert!(r.resolve("ftp:x", &opts(), &ext).is_err());
        assert!(r.resolve("exec:", &opts(), &ext).is_err());
        assert!(r.resolve("builtin:", &opts(), &ext).is_err());
    }

    #[test]
    fn tcp_scheme_dials_and_handshakes() {
        use std::io::Write as _;
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            writeln!(
                stream,
                r#"{{"type":"hello","name":"t","num_classes":2,"input":{{"h":2,"w":2,"c":1}},"supports_gradient":false}}"#
            )
            .unwrap();
            // Hold the socket open until the client hangs up.
            let mut buf = Vec::new();
            use std::io::Read as _;
            let _ = stream.read_to_end(&mut buf);
        });
        let r = PredictorRegistry::with_builtins();
        let p = r
            .resolve(&format!("tcp:{addr}"), &opts(), &ExternalOptions::default())
            .unwrap();
        assert_eq!(p.descriptor().num_classes, 2);
        drop(p);
        server.join().unwrap();
    }
}

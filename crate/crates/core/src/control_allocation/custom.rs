//! Mixers loaded from parameters.
//!
//! Naming: `MIX_{PRI|SEC}_{r}_{c}` for the 60 matrix values (`r` is the
//! input index Fx..Qz, `c` the output channel), `MIX_{PRI|SEC}_OUT{c}_TYPE`
//! and `MIX_{PRI|SEC}_OUT{c}_RATE` for the 20 header values, and
//! `MIX_{PRI|SEC}_FORM` (0 = values are `M`, 1 = values are `M†`).

use super::{
    AllocationError, ChannelHeaders, MatrixForm, MixMatrix, MixerConfig, OutputChannelConfig,
    OutputKind, NUM_INPUTS, NUM_OUTPUTS,
};
use crate::firmware::params::{ParamValue, ParamView};

const DEFAULT_ENTRY: f64 = 0.0;
const DEFAULT_KIND: OutputKind = OutputKind::Aux;
const DEFAULT_RATE: u32 = 50;
const DEFAULT_FORM: MatrixForm = MatrixForm::Forward;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerSlot {
    Primary,
    Secondary,
}

impl MixerSlot {
    pub fn prefix(self) -> &'static str {
        match self {
            MixerSlot::Primary => "MIX_PRI",
            MixerSlot::Secondary => "MIX_SEC",
        }
    }

    pub fn matrix_param(self, r: usize, c: usize) -> String {
        format!("{}_{r}_{c}", self.prefix())
    }

    pub fn type_param(self, c: usize) -> String {
        format!("{}_OUT{c}_TYPE", self.prefix())
    }

    pub fn rate_param(self, c: usize) -> String {
        format!("{}_OUT{c}_RATE", self.prefix())
    }

    pub fn form_param(self) -> String {
        format!("{}_FORM", self.prefix())
    }
}

/// A parameter that was missing and replaced by its default.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomMixerWarning {
    pub param: String,
    pub message: String,
}

struct Reader<'a> {
    params: &'a dyn ParamView,
    warnings: Vec<CustomMixerWarning>,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn read(&mut self, name: &str, default: ParamValue) -> ParamValue {
        match self.params.lookup(name) {
            Some(v) => v,
            None => {
                self.warnings.push(CustomMixerWarning {
                    param: name.to_string(),
                    message: format!("not set, using default {default}"),
                });
                default
            }
        }
    }

    fn real(&mut self, name: &str, default: f64) -> f64 {
        match self.read(name, ParamValue::Real(default)) {
            ParamValue::Real(v) if v.is_finite() => v,
            ParamValue::Real(v) => {
                self.errors.push(format!("{name} (value {v} is not finite)"));
                default
            }
            ParamValue::Int(_) => {
                self.errors.push(format!("{name} (expected a real value)"));
                default
            }
        }
    }

    fn int(&mut self, name: &str, default: i64) -> Option<i64> {
        match self.read(name, ParamValue::Int(default)) {
            ParamValue::Int(v) => Some(v),
            ParamValue::Real(_) => {
                self.errors.push(format!("{name} (expected an integer value)"));
                None
            }
        }
    }
}

/// Builds and validates the custom mixer stored in `slot`. Every problem is
/// reported at once, each naming its parameter.
pub fn load_custom(
    params: &dyn ParamView,
    slot: MixerSlot,
) -> Result<(MixerConfig, Vec<CustomMixerWarning>), AllocationError> {
    let mut rd = Reader {
        params,
        warnings: Vec::new(),
        errors: Vec::new(),
    };

    let form_name = slot.form_param();
    let form = match rd.int(&form_name, DEFAULT_FORM.code()) {
        Some(code) => MatrixForm::from_code(code).unwrap_or_else(|| {
            rd.errors.push(format!("{form_name} (invalid form code {code})"));
            DEFAULT_FORM
        }),
        None => DEFAULT_FORM,
    };

    let mut matrix = MixMatrix::zeros();
    for r in 0..NUM_INPUTS {
        for c in 0..NUM_OUTPUTS {
            matrix[(r, c)] = rd.real(&slot.matrix_param(r, c), DEFAULT_ENTRY);
        }
    }

    let mut channels: ChannelHeaders =
        [OutputChannelConfig::new(DEFAULT_KIND, DEFAULT_RATE); NUM_OUTPUTS];
    for (c, ch) in channels.iter_mut().enumerate() {
        let type_name = slot.type_param(c);
        if let Some(code) = rd.int(&type_name, DEFAULT_KIND.code()) {
            match OutputKind::from_code(code) {
                Some(kind) => ch.kind = kind,
                None => rd.errors.push(format!("{type_name} (invalid channel kind {code})")),
            }
        }
        let rate_name = slot.rate_param(c);
        if let Some(rate) = rd.int(&rate_name, DEFAULT_RATE as i64) {
            match u32::try_from(rate) {
                Ok(r) if r > 0 => ch.rate = r,
                _ => rd.errors.push(format!("{rate_name} (rate must be positive, got {rate})")),
            }
        }
    }

    if !rd.errors.is_empty() {
        return Err(AllocationError::Validation(rd.errors));
    }
    let config = MixerConfig {
        name: format!("custom_{}", slot.prefix().trim_start_matches("MIX_").to_lowercase()),
        form,
        matrix,
        channels,
    };
    Ok((config, rd.warnings))
}

/// The 81 parameter assignments that encode `config` in `slot`.
pub fn write_custom_params(config: &MixerConfig, slot: MixerSlot) -> Vec<(String, ParamValue)> {
    let mut out = vec![(slot.form_param(), ParamValue::Int(config.form.code()))];
    for r in 0..NUM_INPUTS {
        for c in 0..NUM_OUTPUTS {
            out.push((slot.matrix_param(r, c), ParamValue::Real(config.matrix[(r, c)])));
        }
    }
    for (c, ch) in config.channels.iter().enumerate() {
        out.push((slot.type_param(c), ParamValue::Int(ch.kind.code())));
        out.push((slot.rate_param(c), ParamValue::Int(ch.rate as i64)));
    }
    out
}

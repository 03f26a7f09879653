pub(crate) use crate::dsp::fractional_delay as fractional_delay_sinc;
pub(crate) use crate::signals::white_noise;

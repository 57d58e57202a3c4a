#include "trae/error.hpp"

namespace trae {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidShape: return "InvalidShape";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::CropUnderflow: return "CropUnderflow";
        case ErrorKind::SwitchMismatch: return "SwitchMismatch";
        case ErrorKind::StaleCache: return "StaleCache";
        case ErrorKind::ArchError: return "ArchError";
        case ErrorKind::InvalidInit: return "InvalidInit";
        case ErrorKind::NoData: return "NoData";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::FormatError: return "FormatError";
        case ErrorKind::SpecError: return "SpecError";
        case ErrorKind::WrongModel: return "WrongModel";
        case ErrorKind::InvalidInput: return "InvalidInput";
        case ErrorKind::UndefinedMetric: return "UndefinedMetric";
    }
    return "Unknown";
}

}  // namespace trae
